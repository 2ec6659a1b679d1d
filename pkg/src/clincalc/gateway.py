"""Uniform chat/embedding access with content-addressed record/replay.

The gateway is the only component allowed to talk to a provider, and the
only source of nondeterminism in the system. In replay mode it performs
zero network operations: every response comes from an append-only jsonl
cassette keyed by a hash of the canonicalized request. Solver, judge,
attribution, and embedding traffic live in separate cassette namespaces
so re-running one stage never invalidates another's recordings.
"""

from __future__ import annotations

import difflib
import hashlib
import json
import math
import re
import threading
import time
from collections import Counter
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx
from pydantic import BaseModel, ConfigDict, model_validator

from .errors import CassetteMiss, ClincalcError, ProviderError, ProviderTimeout


class Mode(str, Enum):
    live = "live"
    record = "record"
    replay = "replay"


class ChatRequest(BaseModel):
    """One chat-completion request; sampling fields of None defer to the
    provider's defaults."""

    model_config = ConfigDict(frozen=True)

    model: str
    system: str
    user: str
    temperature: float | None = None
    top_p: float | None = None
    repetition_penalty: float | None = None
    max_tokens: int | None = None

    @model_validator(mode="after")
    def _check_sampling(self) -> "ChatRequest":
        if self.temperature is not None and self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.top_p is not None and not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        return self


class EmbeddingVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    dims: int
    values: tuple[float, ...]

    @model_validator(mode="after")
    def _check_dims(self) -> "EmbeddingVector":
        if self.dims != len(self.values):
            raise ValueError(f"dims {self.dims} != len(values) {len(self.values)}")
        return self


class TransportError(ClincalcError):
    """A retryable provider failure (connection, 5xx, rate limit)."""


class TransportTimeout(TransportError):
    """A retryable provider timeout."""


# --- canonicalization and keys ------------------------------------------------


def canonical_text(text: str) -> str:
    """UTF-8 text with LF newlines and per-line trailing whitespace removed."""
    normalized = text.replace("\r\n", "\n").replace("\r", "\n")
    return "\n".join(line.rstrip() for line in normalized.split("\n"))


def cassette_key(kind: str, payload: dict) -> str:
    """Stable content hash of a canonicalized request."""
    body = {"kind": kind}
    body.update(payload)
    blob = json.dumps(body, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def chat_key(request: ChatRequest) -> str:
    return cassette_key(
        "chat",
        {
            "model": request.model,
            "system": canonical_text(request.system),
            "user": canonical_text(request.user),
            "temperature": request.temperature,
            "top_p": request.top_p,
            "repetition_penalty": request.repetition_penalty,
            "max_tokens": request.max_tokens,
        },
    )


def embedding_key(model: str, text: str) -> str:
    return cassette_key("embedding", {"model": model, "text": canonical_text(text)})


# --- providers ----------------------------------------------------------------


class ChatProvider(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str], model: str) -> list[list[float]]: ...


class HttpChatProvider:
    """Speaks the de-facto chat-completions JSON convention."""

    def __init__(self, base_url: str, api_key: str = "", timeout_s: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout_s = timeout_s

    def complete(self, request: ChatRequest) -> str:
        payload: dict = {
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        }
        for field in ("temperature", "top_p", "repetition_penalty", "max_tokens"):
            value = getattr(request, field)
            if value is not None:
                payload[field] = value
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = httpx.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout_s,
            )
        except httpx.TimeoutException as exc:
            raise TransportTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransportError(f"HTTP {response.status_code}: {response.text[:200]}")
        if response.status_code != 200:
            raise ProviderError(f"HTTP {response.status_code}: {response.text[:200]}")
        return response.json()["choices"][0]["message"]["content"]


class HttpEmbeddingProvider:
    def __init__(self, base_url: str, api_key: str = "", timeout_s: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout_s = timeout_s

    def embed(self, texts: Sequence[str], model: str) -> list[list[float]]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = httpx.post(
                f"{self.base_url}/embeddings",
                json={"model": model, "input": list(texts)},
                headers=headers,
                timeout=self.timeout_s,
            )
        except httpx.TimeoutException as exc:
            raise TransportTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransportError(f"HTTP {response.status_code}: {response.text[:200]}")
        if response.status_code != 200:
            raise ProviderError(f"HTTP {response.status_code}: {response.text[:200]}")
        data = sorted(response.json()["data"], key=lambda item: item["index"])
        return [item["embedding"] for item in data]


class MockChatProvider:
    """Scripted chat provider for tests and cassette fixtures.

    ``script`` is a callable mapping a request to text; a plain string
    answers everything. Call count is exposed for budget assertions.
    """

    def __init__(self, script: str | Callable[[ChatRequest], str]):
        self._script = script
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        if callable(self._script):
            return self._script(request)
        return self._script


class MockEmbeddingProvider:
    """Seeded-hash unit vectors: identical text -> identical vector, distinct
    texts -> near-orthogonal vectors. Enables retrieval tests with no
    cassettes."""

    def __init__(self, dims: int = 64):
        self.dims = dims
        self.calls = 0

    def _one(self, text: str, model: str) -> list[float]:
        seed = hashlib.sha256(f"{model}\x00{canonical_text(text)}".encode()).digest()
        values = []
        counter = 0
        while len(values) < self.dims:
            block = hashlib.sha256(seed + counter.to_bytes(4, "big")).digest()
            for i in range(0, len(block) - 7, 8):
                chunk = int.from_bytes(block[i : i + 8], "big")
                values.append(chunk / 2**63 - 1.0)
                if len(values) == self.dims:
                    break
            counter += 1
        norm = math.sqrt(sum(v * v for v in values)) or 1.0
        return [v / norm for v in values]

    def embed(self, texts: Sequence[str], model: str) -> list[list[float]]:
        self.calls += 1
        return [self._one(text, model) for text in texts]


_NGRAM_STOPWORDS = frozenset(
    """a an and are as at be by for from has have how in is it its many may of
    on or per plus s that the this to total using what when with how does do
    patient patients clinical score scores scale index criteria criterion rule
    formula calculator calculation task meets meet points point result value
    values""".split()
)


class NgramEmbeddingProvider:
    """Deterministic locality-sensitive embedder: word, word-bigram, and
    character-trigram features sketched into a fixed-width signed vector
    (two hash positions per feature to tame collision noise). Similar texts
    get high cosine, so it stands in for a hosted embedding model when
    recording cassettes offline. Ubiquitous filler words are heavily
    downweighted so boilerplate phrasing does not dominate the signal."""

    def __init__(self, dims: int = 1024, hashes: int = 2):
        self.dims = dims
        self.hashes = hashes
        self.calls = 0

    def _features(self, text: str) -> Counter:
        feats: Counter = Counter()
        words = re.findall(r"[a-z0-9]+", text.lower())
        for word in words:
            scale = 0.05 if word in _NGRAM_STOPWORDS else 1.0
            feats[f"w:{word}"] += 1.0 * scale
            padded = f"^{word}$"
            for i in range(len(padded) - 2):
                feats[f"c:{padded[i:i+3]}"] += 0.15 * scale
        for a, b in zip(words, words[1:]):
            if a in _NGRAM_STOPWORDS and b in _NGRAM_STOPWORDS:
                continue
            feats[f"b:{a} {b}"] += 0.8
        return feats

    def _one(self, text: str) -> list[float]:
        vector = [0.0] * self.dims
        spread = 1.0 / math.sqrt(self.hashes)
        for feat, weight in self._features(text).items():
            digest = hashlib.sha256(feat.encode()).digest()
            for h in range(self.hashes):
                index = int.from_bytes(digest[8 * h : 8 * h + 8], "big") % self.dims
                sign = 1.0 if digest[24 + h] % 2 == 0 else -1.0
                vector[index] += sign * weight * spread
        norm = math.sqrt(sum(v * v for v in vector))
        if norm == 0.0:
            vector[0] = 1.0
            return vector
        return [round(v / norm, 6) for v in vector]

    def embed(self, texts: Sequence[str], model: str) -> list[list[float]]:
        self.calls += 1
        return [self._one(text) for text in texts]


# --- cassette store -----------------------------------------------------------


class CassetteStore:
    """Append-only jsonl store for one namespace; last entry per key wins."""

    def __init__(self, directory: str | Path, namespace: str):
        self.path = Path(directory) / f"{namespace}.jsonl"
        self._lock = threading.Lock()
        self._entries: dict[str, object] = {}
        self._previews: dict[str, str] = {}
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as handle:
                for line in handle:
                    if not line.strip():
                        continue
                    entry = json.loads(line)
                    self._entries[entry["key"]] = entry["response"]
                    self._previews[entry["key"]] = entry.get("meta", {}).get(
                        "preview", ""
                    )

    def get(self, key: str) -> object | None:
        return self._entries.get(key)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def nearest_key(self, preview: str) -> str | None:
        if not self._previews:
            return None
        best_key, best_score = None, -1.0
        for key, stored in self._previews.items():
            score = difflib.SequenceMatcher(None, preview, stored).ratio()
            if score > best_score:
                best_key, best_score = key, score
        return best_key

    def append(self, key: str, kind: str, response: object, meta: dict) -> None:
        entry = {"key": key, "kind": kind, "response": response, "meta": meta}
        line = json.dumps(entry, ensure_ascii=False, sort_keys=True)
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")
            self._entries[key] = response
            self._previews[key] = meta.get("preview", "")


def _preview(text: str) -> str:
    return canonical_text(text)[:120]


# --- gateway ------------------------------------------------------------------


class LLMGateway:
    """Chat and embedding calls with retries, rate limiting, and cassettes.

    One gateway per namespace; ``scoped`` derives a sibling sharing
    providers, limits, and cassette directory.
    """

    def __init__(
        self,
        mode: Mode | str = Mode.replay,
        cassette_dir: str | Path | None = None,
        namespace: str = "default",
        chat_provider: ChatProvider | None = None,
        embedding_provider: EmbeddingProvider | None = None,
        embed_model: str = "mock-embed",
        max_retries: int = 3,
        backoff_base_s: float = 0.5,
        backoff_cap_s: float = 8.0,
        max_inflight: int = 4,
        sleeper: Callable[[float], None] = time.sleep,
        provider_name: str = "unknown",
    ):
        self.mode = Mode(mode)
        self.namespace = namespace
        self.cassette_dir = Path(cassette_dir) if cassette_dir else None
        self.embed_model = embed_model
        self._chat_provider = chat_provider
        self._embedding_provider = embedding_provider
        self._max_retries = max_retries
        self._backoff_base_s = backoff_base_s
        self._backoff_cap_s = backoff_cap_s
        self._semaphore = threading.Semaphore(max_inflight)
        self._max_inflight = max_inflight
        self._sleeper = sleeper
        self._provider_name = provider_name
        if self.mode is not Mode.live and self.cassette_dir is None:
            raise ValueError(f"{self.mode.value} mode requires a cassette directory")
        self._store = (
            CassetteStore(self.cassette_dir, namespace) if self.cassette_dir else None
        )

    def scoped(self, namespace: str) -> "LLMGateway":
        return LLMGateway(
            mode=self.mode,
            cassette_dir=self.cassette_dir,
            namespace=namespace,
            chat_provider=self._chat_provider,
            embedding_provider=self._embedding_provider,
            embed_model=self.embed_model,
            max_retries=self._max_retries,
            backoff_base_s=self._backoff_base_s,
            backoff_cap_s=self._backoff_cap_s,
            max_inflight=self._max_inflight,
            sleeper=self._sleeper,
            provider_name=self._provider_name,
        )

    # -- internals --

    def _with_retries(self, call: Callable[[], object]) -> object:
        delay = self._backoff_base_s
        last: Exception | None = None
        for attempt in range(self._max_retries + 1):
            try:
                with self._semaphore:
                    return call()
            except TransportError as exc:
                last = exc
                if attempt == self._max_retries:
                    break
                self._sleeper(min(delay, self._backoff_cap_s))
                delay *= 2
        if isinstance(last, TransportTimeout):
            raise ProviderTimeout(str(last)) from last
        raise ProviderError(
            f"provider failed after {self._max_retries + 1} attempts: {last}"
        ) from last

    def _meta(self, model: str, preview: str) -> dict:
        return {
            "provider": self._provider_name,
            "model": model,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "preview": preview,
        }

    # -- public API --

    def chat(self, request: ChatRequest) -> str:
        key = chat_key(request)
        if self._store is not None and key in self._store:
            return str(self._store.get(key))
        if self.mode is Mode.replay:
            assert self._store is not None
            raise CassetteMiss(key, hint=self._store.nearest_key(_preview(request.user)))
        if self._chat_provider is None:
            raise ProviderError("no chat provider configured")
        text = str(self._with_retries(lambda: self._chat_provider.complete(request)))
        if self.mode is Mode.record and self._store is not None:
            self._store.append(
                key, "chat", text, self._meta(request.model, _preview(request.user))
            )
        return text

    def embed(self, texts: Sequence[str], model: str | None = None) -> list[EmbeddingVector]:
        model = model or self.embed_model
        keys = [embedding_key(model, text) for text in texts]
        results: dict[int, list[float]] = {}
        missing: list[int] = []
        for i, key in enumerate(keys):
            stored = self._store.get(key) if self._store is not None else None
            if stored is not None:
                results[i] = [float(v) for v in stored]  # type: ignore[union-attr]
            else:
                missing.append(i)
        if missing:
            if self.mode is Mode.replay:
                assert self._store is not None
                first = missing[0]
                raise CassetteMiss(
                    keys[first], hint=self._store.nearest_key(_preview(texts[first]))
                )
            if self._embedding_provider is None:
                raise ProviderError("no embedding provider configured")
            # One provider call per unique missing text, batched.
            unique: dict[str, list[int]] = {}
            for i in missing:
                unique.setdefault(texts[i], []).append(i)
            batch = list(unique)
            vectors = self._with_retries(
                lambda: self._embedding_provider.embed(batch, model)
            )
            for text, vector in zip(batch, vectors):  # type: ignore[arg-type]
                values = [float(v) for v in vector]
                for i in unique[text]:
                    results[i] = values
                if self.mode is Mode.record and self._store is not None:
                    self._store.append(
                        embedding_key(model, text),
                        "embedding",
                        values,
                        self._meta(model, _preview(text)),
                    )
        return [
            EmbeddingVector(dims=len(results[i]), values=tuple(results[i]))
            for i in range(len(texts))
        ]
