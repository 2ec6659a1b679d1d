"""Gateway: cassette record/replay, canonical keys, retries, determinism."""

import threading

import pytest

from clincalc.errors import CassetteMiss, ProviderError, ProviderTimeout
from clincalc.gateway import (
    ChatRequest,
    EmbeddingVector,
    LLMGateway,
    MockChatProvider,
    MockEmbeddingProvider,
    Mode,
    NgramEmbeddingProvider,
    TransportError,
    TransportTimeout,
    canonical_text,
    chat_key,
    embedding_key,
)


class SentinelChatProvider:
    """Fails the test if the gateway performs any network-like call."""

    def complete(self, request):
        raise AssertionError("replay mode must not touch the provider")


class SentinelEmbeddingProvider:
    def embed(self, texts, model):
        raise AssertionError("replay mode must not touch the provider")


class FlakyChatProvider:
    def __init__(self, failures, timeout=False):
        self.failures = failures
        self.timeout = timeout
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransportTimeout("boom") if self.timeout else TransportError("boom")
        return "recovered"


def _request(user="hello", temperature=None):
    return ChatRequest(model="m", system="sys", user=user, temperature=temperature)


class TestKeys:
    def test_stable_across_calls(self):
        assert chat_key(_request()) == chat_key(_request())

    def test_trailing_whitespace_canonicalized(self):
        a = chat_key(_request(user="line one  \nline two\t"))
        b = chat_key(_request(user="line one\nline two"))
        assert a == b

    def test_crlf_canonicalized(self):
        assert canonical_text("a\r\nb\rc") == "a\nb\nc"

    def test_temperature_changes_key(self):
        assert chat_key(_request(temperature=0.6)) != chat_key(_request())

    def test_embedding_key_model_scoped(self):
        assert embedding_key("a", "text") != embedding_key("b", "text")


class TestChatRequestInvariants:
    def test_negative_temperature_rejected(self):
        with pytest.raises(ValueError):
            ChatRequest(model="m", system="s", user="u", temperature=-0.1)

    def test_top_p_bounds(self):
        with pytest.raises(ValueError):
            ChatRequest(model="m", system="s", user="u", top_p=0.0)
        ChatRequest(model="m", system="s", user="u", top_p=1.0)


class TestRecordReplay:
    def test_record_then_replay_byte_identical(self, tmp_path):
        recorder = LLMGateway(
            mode=Mode.record, cassette_dir=tmp_path, namespace="t",
            chat_provider=MockChatProvider(lambda r: f"resp::{r.user}"),
            embedding_provider=MockEmbeddingProvider(dims=8),
        )
        texts = ["alpha", "beta"]
        chat_out = [recorder.chat(_request(user=t)) for t in texts]
        embed_out = recorder.embed(texts)

        replayer = LLMGateway(
            mode=Mode.replay, cassette_dir=tmp_path, namespace="t",
            chat_provider=SentinelChatProvider(),
            embedding_provider=SentinelEmbeddingProvider(),
        )
        assert [replayer.chat(_request(user=t)) for t in texts] == chat_out
        assert replayer.embed(texts) == embed_out

    def test_replay_miss_names_key_and_hint(self, tmp_path):
        recorder = LLMGateway(
            mode=Mode.record, cassette_dir=tmp_path, namespace="t",
            chat_provider=MockChatProvider("x"),
        )
        recorder.chat(_request(user="the quick brown fox"))
        replayer = LLMGateway(mode=Mode.replay, cassette_dir=tmp_path, namespace="t")
        request = _request(user="the quick brown fix")
        with pytest.raises(CassetteMiss) as exc:
            replayer.chat(request)
        assert exc.value.key == chat_key(request)
        assert exc.value.hint == chat_key(_request(user="the quick brown fox"))

    def test_record_dedupes_identical_requests(self, tmp_path):
        provider = MockChatProvider("same")
        gateway = LLMGateway(
            mode=Mode.record, cassette_dir=tmp_path, namespace="t",
            chat_provider=provider,
        )
        gateway.chat(_request())
        gateway.chat(_request())
        assert provider.calls == 1
        lines = (tmp_path / "t.jsonl").read_text().strip().splitlines()
        assert len(lines) == 1

    def test_embed_batch_order_and_dedup(self, tmp_path):
        provider = MockEmbeddingProvider(dims=6)
        gateway = LLMGateway(
            mode=Mode.record, cassette_dir=tmp_path, namespace="t",
            embedding_provider=provider,
        )
        vectors = gateway.embed(["a", "a", "b"])
        assert provider.calls == 1
        assert vectors[0] == vectors[1]
        assert vectors[0] != vectors[2]
        assert all(v.dims == 6 for v in vectors)

    def test_namespaces_are_separate_files(self, tmp_path):
        gateway = LLMGateway(
            mode=Mode.record, cassette_dir=tmp_path, namespace="solve",
            chat_provider=MockChatProvider("s"),
        )
        gateway.chat(_request())
        judge = gateway.scoped("judge")
        judge.chat(_request(user="other"))
        assert (tmp_path / "solve.jsonl").exists()
        assert (tmp_path / "judge.jsonl").exists()

    def test_replay_requires_cassette_dir(self):
        with pytest.raises(ValueError):
            LLMGateway(mode=Mode.replay, cassette_dir=None)


class TestRetries:
    def test_backoff_schedule_and_recovery(self, tmp_path):
        provider = FlakyChatProvider(failures=2)
        sleeps = []
        gateway = LLMGateway(
            mode=Mode.live, chat_provider=provider, max_retries=3,
            backoff_base_s=0.5, backoff_cap_s=8.0, sleeper=sleeps.append,
        )
        assert gateway.chat(_request()) == "recovered"
        assert provider.calls == 3
        assert sleeps == [0.5, 1.0]

    def test_attempt_budget_respected(self):
        provider = FlakyChatProvider(failures=99)
        sleeps = []
        gateway = LLMGateway(
            mode=Mode.live, chat_provider=provider, max_retries=2,
            sleeper=sleeps.append,
        )
        with pytest.raises(ProviderError):
            gateway.chat(_request())
        assert provider.calls == 3  # 1 + 2 retries
        assert len(sleeps) == 2

    def test_backoff_cap(self):
        provider = FlakyChatProvider(failures=99)
        sleeps = []
        gateway = LLMGateway(
            mode=Mode.live, chat_provider=provider, max_retries=5,
            backoff_base_s=4.0, backoff_cap_s=6.0, sleeper=sleeps.append,
        )
        with pytest.raises(ProviderError):
            gateway.chat(_request())
        assert sleeps == [4.0, 6.0, 6.0, 6.0, 6.0]

    def test_timeout_surfaced_as_timeout(self):
        provider = FlakyChatProvider(failures=99, timeout=True)
        gateway = LLMGateway(
            mode=Mode.live, chat_provider=provider, max_retries=1,
            sleeper=lambda s: None,
        )
        with pytest.raises(ProviderTimeout):
            gateway.chat(_request())


class TestMockEmbeddings:
    def test_deterministic_across_instances(self):
        a = MockEmbeddingProvider(dims=16).embed(["text"], "m")[0]
        b = MockEmbeddingProvider(dims=16).embed(["text"], "m")[0]
        assert a == b

    def test_distinct_texts_near_orthogonal(self):
        vecs = MockEmbeddingProvider(dims=64).embed(["aaa", "bbb"], "m")
        dot = sum(x * y for x, y in zip(vecs[0], vecs[1]))
        assert abs(dot) < 0.5

    def test_unit_norm(self):
        values = NgramEmbeddingProvider(dims=64).embed(["sodium glucose"], "m")[0]
        norm = sum(v * v for v in values) ** 0.5
        assert abs(norm - 1.0) < 1e-3


class TestConcurrency:
    def test_parallel_record_is_consistent(self, tmp_path):
        gateway = LLMGateway(
            mode=Mode.record, cassette_dir=tmp_path, namespace="t",
            chat_provider=MockChatProvider(lambda r: f"r::{r.user}"),
            max_inflight=4,
        )
        results = {}

        def work(i):
            results[i] = gateway.chat(_request(user=f"u{i % 5}"))

        threads = [threading.Thread(target=work, args=(i,)) for i in range(20)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(results[i] == f"r::u{i % 5}" for i in range(20))
        replayer = LLMGateway(mode=Mode.replay, cassette_dir=tmp_path, namespace="t")
        assert replayer.chat(_request(user="u0")) == "r::u0"


def test_embedding_vector_invariant():
    with pytest.raises(ValueError):
        EmbeddingVector(dims=3, values=(1.0, 0.0))
