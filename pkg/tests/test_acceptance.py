"""Acceptance gate: every primary criterion at its stated tolerance.

Each test prints one PASS line on success; a failing criterion fails its
test. Sandbox-dependent paths use the scripted fake runner speaking the
wire protocol; no live model access is involved anywhere.
"""

import hashlib
import itertools
import json
import random
import time
from decimal import Decimal
from pathlib import Path

from click.testing import CliRunner

from clincalc.attribution import build_error_prompt, jaccard
from clincalc.cli import main
from clincalc.dataset import load_cases
from clincalc.gateway import (
    LLMGateway,
    MockChatProvider,
    MockEmbeddingProvider,
    Mode,
)
from clincalc.judge import (
    build_step_prompt,
    compute_metrics,
    percent_agreement,
)
from clincalc.model import (
    STEP_ORDER,
    CaseEvaluation,
    CaseRecord,
    Category,
    ErrorType,
    Step,
    Strategy,
)
from clincalc.retrieval import build_index, eval_retrieval, load_bank
from clincalc.solvers import SolveConfig, solve
from clincalc.tolerance import ToleranceSpec, decimal_places, range_match, strict_match

FIXTURES = Path(__file__).parent / "fixtures"
DATASET = FIXTURES / "cases_1048.jsonl"
CASES_10 = FIXTURES / "cases_10.jsonl"
CASSETTES = FIXTURES / "cassettes"
BANK_55 = Path(__file__).parent.parent / "src/clincalc/data/formula_bank_55.jsonl"

NEG46 = {
    472, 803, 473, 946, 940, 804, 764, 936, 761, 798, 930, 738, 934, 938, 789,
    469, 792, 948, 944, 937, 781, 941, 507, 478, 801, 945, 931, 477, 806, 929,
    763, 794, 471, 932, 481, 942, 947, 943, 805, 486, 939, 768, 810, 933, 935,
    468,
}


def ok(name: str) -> None:
    print(f"ACCEPTANCE PASS - {name}")


def test_cleaning_fidelity(tmp_path):
    """cli_clean retains exactly 940 of 1048 with the documented reasons."""
    start = time.perf_counter()
    result = CliRunner().invoke(main, [
        "clean", "--dataset", str(DATASET), "--out-dir", str(tmp_path),
    ], catch_exceptions=False)
    elapsed = time.perf_counter() - start
    assert result.exit_code == 0, result.output
    assert elapsed < 5.0, f"cleaning took {elapsed:.2f}s"
    report = json.loads((tmp_path / "cleaning_report.json").read_text())
    assert len(report["retained"]) == 940
    assert len(report["removed"]) == 108

    cases = {c.row_number: c for c in load_cases(DATASET)}
    by_reason: dict[str, set[int]] = {}
    for removal in report["removed"]:
        by_reason.setdefault(removal["reason"], set()).add(removal["row_number"])
    assert by_reason["negative_limits_swapped"] == NEG46
    assert by_reason["row451_wrong_gold"] == {451}
    assert cases[451].calculator_id == 3
    for reason, calc in (
        ("calc13_formula_mistyped", 13),
        ("calc28_scoring_rule", 28),
        ("calc11_unit_mismatch", 11),
        ("calc36_gender_scoring", 36),
    ):
        expected = {r for r, c in cases.items() if c.calculator_id == calc}
        assert by_reason[reason] == expected, reason
    ok(f"cleaning fidelity (940/108 in {elapsed:.2f}s)")


def test_strict_comparator_worked_vector():
    """The worked sodium-correction vector, exact booleans."""
    matched, spec = strict_match("135.432", Decimal("137.248"))
    assert matched is False
    assert spec.tolerance == Decimal("0.005")
    assert range_match(Decimal("135.432"), Decimal("130.39"), Decimal("144.11")) is True
    matched, spec = strict_match("137.25", Decimal("137.248"))
    assert matched is True
    assert spec.tolerance == Decimal("0.005")
    ok("strict comparator on the worked sodium vector")


def test_tolerance_table():
    """The three worked precision cases map to their exact tolerances."""
    assert decimal_places("10.65") == 2
    assert ToleranceSpec.for_places(decimal_places("10.65")).tolerance == Decimal("0.005")
    assert decimal_places("10.7") == 1
    assert ToleranceSpec.for_places(decimal_places("10.7")).tolerance == Decimal("0.05")
    assert decimal_places("10.6512") == 4
    spec = ToleranceSpec.for_places(decimal_places("10.6512"))
    assert spec.effective_places == 2
    assert spec.tolerance == Decimal("0.005")
    ok("tolerance table (0.005 / 0.05 / round-to-2dp 0.005)")


def test_metrics_oracle_thousand_tables():
    """compute_metrics equals brute-force counting within 1e-12, under 1s."""
    rng = random.Random(20250810)
    tables = [tuple(rng.random() < 0.65 for _ in range(4)) for _ in range(1000)]
    evaluations = [
        CaseEvaluation.from_raw(i, {s: (v, "") for s, v in zip(STEP_ORDER, t)})
        for i, t in enumerate(tables, start=1)
    ]
    start = time.perf_counter()
    metrics = compute_metrics(evaluations)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"metrics took {elapsed:.3f}s"

    accuracy = sum(1 for t in tables if all(t)) / len(tables)
    assert abs(metrics.accuracy_overall - accuracy) < 1e-12
    for i, step in enumerate(STEP_ORDER):
        eligible = [t for t in tables if all(t[:i])]
        if eligible:
            cc = sum(1 for t in eligible if t[i]) / len(eligible)
            assert abs(metrics.cc[step] - cc) < 1e-12
        else:
            assert step not in metrics.cc
    failures = [t for t in tables if not all(t)]
    for i, step in enumerate(STEP_ORDER):
        count = sum(1 for t in failures if all(t[:i]) and not t[i])
        if count:
            assert abs(metrics.fe[step] - count / len(failures)) < 1e-12
        else:
            assert step not in metrics.fe
    assert failures and abs(sum(metrics.fe.values()) - 1.0) < 1e-12
    ok(f"metrics oracle over 1000 tables ({elapsed * 1000:.0f} ms)")


def test_gating_exhaustive():
    """All 16 raw-verdict combinations gate correctly, exactly."""
    for raws in itertools.product([True, False], repeat=4):
        evaluation = CaseEvaluation.from_raw(
            1, {s: (v, "") for s, v in zip(STEP_ORDER, raws)}
        )
        gated = [v.gated_correct for v in evaluation.verdicts]
        for prev, cur in zip(gated, gated[1:]):
            assert not (cur and not prev)
        assert evaluation.kappa == all(gated)
        if not evaluation.kappa:
            assert evaluation.first_error == next(
                s for s, v in zip(STEP_ORDER, raws) if not v
            )
    ok("gating exhaustiveness (16/16 patterns)")


def test_prompt_fidelity():
    """All 4 eval and 8 error builders hash-match the committed fixtures."""
    prompts = FIXTURES / "prompts"
    checked = 0
    for step in Step:
        system, user = build_step_prompt(step, "ANSWER_PART_SAMPLE", "REFERENCE_SAMPLE")
        for kind, text in (("system", system), ("user", user)):
            want = (prompts / f"eval_{step.value}.{kind}.txt").read_bytes()
            assert hashlib.sha256(text.encode()).hexdigest() == hashlib.sha256(
                want
            ).hexdigest(), f"eval {step.value} {kind} drifted"
        checked += 1
    context = {
        "note": "NOTE_SAMPLE", "question": "QUESTION_SAMPLE",
        "gold_formula": "GOLD_FORMULA_SAMPLE",
        "gold_extraction": "GOLD_EXTRACTION_SAMPLE",
        "gold_explanation": "GOLD_EXPLANATION_SAMPLE", "answer": "ANSWER_SAMPLE",
    }
    for error_type in ErrorType:
        system, user = build_error_prompt(error_type, context)
        for kind, text in (("system", system), ("user", user)):
            want = (prompts / f"error_{error_type.value}.{kind}.txt").read_bytes()
            assert hashlib.sha256(text.encode()).hexdigest() == hashlib.sha256(
                want
            ).hexdigest(), f"error {error_type.value} {kind} drifted"
        checked += 1
    assert checked == 12
    ok("prompt fidelity (4 eval + 8 error builders hash-match)")


def test_retrieval_mock_and_cassettes(tmp_path):
    """Mock self-queries hit at k=1; cassette replay is perfect at k=2 on
    both bank sizes, within 10 seconds."""
    entries = load_bank(BANK_55)
    mock_gateway = LLMGateway(
        mode=Mode.record, cassette_dir=tmp_path, namespace="embed",
        embedding_provider=MockEmbeddingProvider(dims=64),
    )
    index = build_index(entries, mock_gateway)
    self_queries = [(e.document(), e.formula_id) for e in entries]
    assert eval_retrieval(index, self_queries, [1], mock_gateway)[1] == 1.0

    queries = [
        (row["query"], row["gold_formula_id"])
        for row in map(json.loads, (FIXTURES / "retrieval_queries.jsonl").open())
    ]
    start = time.perf_counter()
    replay = LLMGateway(
        mode=Mode.replay, cassette_dir=CASSETTES / "retrieval",
        namespace="embed", embed_model="ngram-v1",
    )
    acc55 = eval_retrieval(build_index(entries, replay), queries, [1, 2], replay)
    entries785 = load_bank(FIXTURES / "bank_785.jsonl")
    acc785 = eval_retrieval(build_index(entries785, replay), queries, [1, 2], replay)
    elapsed = time.perf_counter() - start
    assert acc55[2] == 1.0, acc55
    assert acc785[2] == 1.0, acc785
    assert elapsed < 10.0, f"replayed retrieval took {elapsed:.2f}s"
    ok(
        "retrieval (mock@1=1.0; cassette top-2 = 1.0 on 55 and 785 in "
        f"{elapsed:.2f}s)"
    )


def test_replay_determinism_across_runs_and_workers(tmp_path):
    """solve(cot) + evaluate over committed cassettes: byte-identical files
    across two runs and worker counts 1 and 8."""
    runner = CliRunner()

    def run(label: str, workers: int) -> dict[str, bytes]:
        solve_out = tmp_path / label / "solve"
        result = runner.invoke(main, [
            "solve", "--dataset", str(CASES_10), "--strategy", "cot",
            "--model", "fixture-cot", "--mode", "replay",
            "--cassette-dir", str(CASSETTES / "replay10"),
            "--out-dir", str(solve_out), "--workers", str(workers),
        ], catch_exceptions=False)
        assert result.exit_code == 0, result.output
        eval_out = tmp_path / label / "eval"
        result = runner.invoke(main, [
            "evaluate", "--dataset", str(CASES_10),
            "--answers", str(solve_out / "answers.jsonl"),
            "--mode", "replay", "--cassette-dir", str(CASSETTES / "replay10"),
            "--judge-model", "fixture-judge",
            "--out-dir", str(eval_out), "--workers", str(workers),
        ], catch_exceptions=False)
        assert result.exit_code == 0, result.output
        return {
            str(p.relative_to(tmp_path / label)): p.read_bytes()
            for p in sorted((tmp_path / label).rglob("*"))
            if p.is_file()
        }

    first = run("one", 1)
    second = run("two", 1)
    wide = run("eight", 8)
    assert first == second, "re-run drifted"
    assert first == wide, "worker count changed output bytes"
    ok("replay determinism (2 runs x workers {1, 8} byte-identical)")


def test_self_refine_call_budget():
    """Exactly 2 calls on immediate no-error; exactly 11 when always critical."""
    case = CaseRecord(
        row_number=1, calculator_id=4, calculator_name="Body Mass Index (BMI)",
        category=Category.equation_based, patient_note="n", question="q",
        gold_answer="24.2", gold_numeric=Decimal("24.2"),
    )
    answer_json = json.dumps({
        "formula": "BMI", "formula_reason": "", "extracted_values": {},
        "calculation": "ok", "final_answer": "24.2",
    })

    quiet = MockChatProvider(
        lambda r: '{"result": "Correct", "explanation": "fine"}'
        if r.user.startswith("You previously answered") else answer_json
    )
    gateway = LLMGateway(mode=Mode.live, chat_provider=quiet)
    solve(case, SolveConfig(strategy=Strategy.self_refine, model="m"), gateway)
    assert quiet.calls == 2, quiet.calls

    critical = MockChatProvider(
        lambda r: '{"result": "Incorrect", "explanation": "still wrong"}'
        if r.user.startswith("You previously answered") else answer_json
    )
    gateway = LLMGateway(mode=Mode.live, chat_provider=critical)
    solve(
        case,
        SolveConfig(strategy=Strategy.self_refine, model="m", refine_max_rounds=5),
        gateway,
    )
    assert critical.calls == 11, critical.calls
    ok("self-refine budget (2 and 11 calls exactly)")


def test_jaccard_and_percent_agreement():
    """Closed-form examples exact; symmetry and bounds on 10,000 random pairs."""
    assert jaccard({"F"}, {"F", "A"}) == 0.5
    assert jaccard({"F", "A"}, {"F", "A"}) == 1.0
    assert jaccard(set(), set()) == 1.0
    assert percent_agreement([True, False], [True, False]) == 1.0
    assert percent_agreement([True, False], [False, True]) == 0.0
    assert percent_agreement([True, True], [True, False]) == 0.5

    rng = random.Random(99)
    universe = list(range(12))
    for _ in range(10_000):
        a = {x for x in universe if rng.random() < 0.4}
        b = {x for x in universe if rng.random() < 0.4}
        value = jaccard(a, b)
        assert 0.0 <= value <= 1.0
        assert value == jaccard(b, a)
    for _ in range(10_000):
        n = rng.randrange(1, 12)
        a = [rng.random() < 0.5 for _ in range(n)]
        b = [rng.random() < 0.5 for _ in range(n)]
        value = percent_agreement(a, b)
        assert 0.0 <= value <= 1.0
        assert value == percent_agreement(b, a)
    ok("jaccard / percent agreement (closed forms + 10k random pairs each)")
