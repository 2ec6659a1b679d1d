"""Command-line entry points orchestrating the full workflow.

Every command is re-runnable: outputs are pure functions of the inputs,
cassettes, and configuration, and land under an output directory together
with a run manifest. Exit codes: 0 success, 1 evaluation found failing
cases (only with --exit-status-on-failures), 2 usage or resource errors.
"""

from __future__ import annotations

import os
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import click
from pydantic import BaseModel, ConfigDict

from . import __version__
from .attribution import (
    AttributionConfig,
    aggregate_error_counts,
    attribute,
    error_counts_csv,
)
from .dataset import (
    apply_cleaning,
    load_cases,
    load_column_map,
    parse_cleaning_rules,
)
from .errors import ClincalcError, MissingResource
from .gateway import (
    HttpChatProvider,
    HttpEmbeddingProvider,
    LLMGateway,
    MockChatProvider,
    MockEmbeddingProvider,
    Mode,
    NgramEmbeddingProvider,
)
from .judge import JudgeConfig, compute_metrics, evaluate_case
from .model import CaseRecord, Strategy, StructuredAnswer
from .report import (
    build_report,
    load_specialty_map,
    make_manifest,
    metrics_csv,
    read_jsonl,
    write_json,
    write_jsonl,
)
from .retrieval import build_index, eval_retrieval, load_bank, load_index
from .sandbox import SandboxClient
from .solvers import SolveConfig, solve

DEFAULT_BANK = "builtin:55"

_STUB_ANSWER = (
    '{"formula": "", "formula_reason": "", "extracted_values": {}, '
    '"calculation": "", "final_answer": "0"}'
)


class AnswerRecord(BaseModel):
    """One line of the answers jsonl: keyed by (row_number, strategy, model)."""

    model_config = ConfigDict(frozen=True)

    row_number: int
    strategy: Strategy
    model: str
    answer: StructuredAnswer | None = None
    error: str | None = None



def _input_ref(path) -> dict:
    """Content-based reference to an input file: manifests must not depend
    on where inputs happen to live."""
    from .report import file_sha256

    p = Path(path)
    return {"name": p.name, "sha256": file_sha256(p)}

def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


def _bank_entries(bank: str):
    if bank == DEFAULT_BANK:
        import json as _json

        from .retrieval import FormulaEntry

        text = (
            resources.files("clincalc.data")
            .joinpath("formula_bank_55.jsonl")
            .read_text("utf-8")
        )
        return [
            FormulaEntry.model_validate(_json.loads(line))
            for line in text.splitlines()
            if line.strip()
        ]
    return load_bank(bank)


def _formula_library(bank: str) -> dict[int, str]:
    return {
        e.calculator_id: f"{e.name}\n{e.expression}"
        for e in _bank_entries(bank)
        if e.calculator_id is not None
    }


def _chat_provider(name: str):
    if name == "http":
        base = os.environ.get("CLINCALC_API_BASE", "")
        if not base:
            _fail("chat provider 'http' needs CLINCALC_API_BASE")
        return HttpChatProvider(base, os.environ.get("CLINCALC_API_KEY", ""))
    if name == "stub":
        return MockChatProvider(_STUB_ANSWER)
    _fail(f"unknown chat provider {name!r}")


def _embed_provider(name: str):
    if name == "http":
        base = os.environ.get(
            "CLINCALC_EMBED_API_BASE", os.environ.get("CLINCALC_API_BASE", "")
        )
        if not base:
            _fail("embed provider 'http' needs CLINCALC_EMBED_API_BASE")
        return HttpEmbeddingProvider(
            base,
            os.environ.get("CLINCALC_EMBED_API_KEY", os.environ.get("CLINCALC_API_KEY", "")),
        )
    if name == "mock":
        return MockEmbeddingProvider()
    if name == "ngram":
        return NgramEmbeddingProvider()
    _fail(f"unknown embed provider {name!r}")


def _gateway(
    mode: str,
    cassette_dir: str | None,
    namespace: str,
    chat_provider: str | None = None,
    embed_provider: str | None = None,
    embed_model: str = "mock-embed",
    workers: int = 4,
) -> LLMGateway:
    mode_enum = Mode(mode)
    if mode_enum is not Mode.live and not cassette_dir:
        _fail(f"--mode {mode} requires --cassette-dir")
    return LLMGateway(
        mode=mode_enum,
        cassette_dir=cassette_dir,
        namespace=namespace,
        chat_provider=_chat_provider(chat_provider)
        if mode_enum is not Mode.replay and chat_provider
        else None,
        embedding_provider=_embed_provider(embed_provider)
        if mode_enum is not Mode.replay and embed_provider
        else None,
        embed_model=embed_model,
        max_inflight=max(workers, 1),
        provider_name=chat_provider or embed_provider or "none",
    )


def _load_answer_records(path: str) -> list[AnswerRecord]:
    return [AnswerRecord.model_validate(row) for row in read_jsonl(path)]


def _run_pool(workers: int, items: list, fn):
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Batch harness for clinical-calculation answer grading and solving."""


# --- clean --------------------------------------------------------------------


@main.command("clean")
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--column-map", type=click.Path(exists=True), default=None)
@click.option("--cleaning-rules", type=click.Path(exists=True), default=None)
@click.option("--run-id", default=None)
def cli_clean(dataset, out_dir, column_map, cleaning_rules, run_id) -> None:
    """Apply the removal list; write the retained set and a cleaning report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        columns = load_column_map(column_map) if column_map else None
        cases = load_cases(dataset, column_map=columns)
        if cleaning_rules:
            rules, notes = parse_cleaning_rules(
                Path(cleaning_rules).read_text(encoding="utf-8")
            )
            retained, report = apply_cleaning(cases, rules, notes)
        else:
            retained, report = apply_cleaning(cases)
    except ClincalcError as exc:
        _fail(str(exc))
        return
    write_jsonl(out / "retained.jsonl", retained)
    write_json(out / "cleaning_report.json", report.model_dump(mode="json"))
    manifest = make_manifest(
        "clean",
        Mode.replay,  # cleaning is offline; manifest timestamps stay pinned
        {"dataset": _input_ref(dataset),
         "cleaning_rules": _input_ref(cleaning_rules) if cleaning_rules else "builtin"},
        dataset_path=dataset,
        run_id=run_id,
    )
    write_json(out / "manifest.json", manifest.model_dump(mode="json"))
    click.echo(f"retained {len(report.retained)} / removed {len(report.removed)}")


# --- solve --------------------------------------------------------------------


@main.command("solve")
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--strategy", required=True, type=click.Choice([s.value for s in Strategy]))
@click.option("--model", required=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--cassette-dir", type=click.Path(), default=None)
@click.option("--mode", type=click.Choice(["live", "record", "replay"]), default="replay")
@click.option("--k", "retrieval_k", type=int, default=2, help="formulas retrieved for medrac/rag_only")
@click.option("--knn-k", type=int, default=3)
@click.option("--refine-rounds", type=int, default=5)
@click.option("--sandbox-cmd", default=None)
@click.option("--sandbox-timeout", type=float, default=10.0)
@click.option("--bank", default=None, help="formula bank jsonl, or builtin:55")
@click.option("--index", "index_path", type=click.Path(exists=True), default=None)
@click.option("--exemplar-pool", type=click.Path(exists=True), default=None,
              help="pool for oneshot/medprompt; defaults to the dataset itself")
@click.option("--chat-provider", default="http", type=click.Choice(["http", "stub"]))
@click.option("--embed-provider", default="ngram", type=click.Choice(["http", "mock", "ngram"]))
@click.option("--embed-model", default="ngram-v1")
@click.option("--temperature", type=float, default=None)
@click.option("--top-p", type=float, default=None)
@click.option("--repetition-penalty", type=float, default=None)
@click.option("--max-tokens", type=int, default=None)
@click.option("--workers", type=int, default=1)
@click.option("--limit", type=int, default=None)
@click.option("--run-id", default=None)
def cli_solve(
    dataset, strategy, model, out_dir, cassette_dir, mode, retrieval_k, knn_k,
    refine_rounds, sandbox_cmd, sandbox_timeout, bank, index_path, exemplar_pool,
    chat_provider, embed_provider, embed_model, temperature, top_p,
    repetition_penalty, max_tokens, workers, limit, run_id,
) -> None:
    """Generate answers for every case under one strategy."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    strategy_enum = Strategy(strategy)
    config = SolveConfig(
        strategy=strategy_enum,
        model=model,
        retrieval_k=retrieval_k,
        knn_k=knn_k,
        refine_max_rounds=refine_rounds,
        sandbox_timeout_s=sandbox_timeout,
        temperature=temperature,
        top_p=top_p,
        repetition_penalty=repetition_penalty,
        max_tokens=max_tokens,
    )
    sandbox = None
    try:
        cases = load_cases(dataset)
        if limit:
            cases = cases[:limit]
        gateway = _gateway(
            mode, cassette_dir, "solve", chat_provider, embed_provider,
            embed_model, workers,
        )
        index = None
        if strategy_enum in (Strategy.medrac, Strategy.rag_only):
            if index_path:
                index = load_index(index_path)
            elif bank:
                embed_gateway = _gateway(
                    mode, cassette_dir, "embed", None, embed_provider,
                    embed_model, workers,
                )
                index = build_index(_bank_entries(bank), embed_gateway)
            else:
                raise MissingResource(
                    f"strategy {strategy} requires --index or --bank"
                )
        pool = None
        if strategy_enum in (Strategy.oneshot, Strategy.medprompt):
            pool = load_cases(exemplar_pool) if exemplar_pool else cases
        if strategy_enum in (Strategy.medrac, Strategy.code_only):
            if not sandbox_cmd:
                _fail(f"strategy {strategy} requires --sandbox-cmd")
            sandbox = SandboxClient(shlex.split(sandbox_cmd))

        def solve_one(case: CaseRecord) -> AnswerRecord:
            try:
                answer = solve(case, config, gateway, index, pool, sandbox)
                return AnswerRecord(
                    row_number=case.row_number, strategy=strategy_enum,
                    model=model, answer=answer,
                )
            except ClincalcError as exc:
                # Per-case failures (no code, sandbox error) are recorded,
                # not fatal; infrastructure errors abort below.
                from .errors import NoCodeEmitted, SandboxFailure

                if isinstance(exc, (NoCodeEmitted, SandboxFailure)):
                    return AnswerRecord(
                        row_number=case.row_number, strategy=strategy_enum,
                        model=model, error=str(exc),
                    )
                raise

        records = _run_pool(workers, cases, solve_one)
    except ClincalcError as exc:
        _fail(str(exc))
        return
    finally:
        if sandbox is not None:
            sandbox.close()
    records.sort(key=lambda r: r.row_number)
    write_jsonl(out / "answers.jsonl", records)
    manifest = make_manifest(
        "solve",
        Mode(mode),
        {
            "dataset": _input_ref(dataset),
            "solve_config": config.model_dump(mode="json"),
        },
        dataset_path=dataset,
        namespaces=["solve", "embed"],
        run_id=run_id,
    )
    write_json(out / "manifest.json", manifest.model_dump(mode="json"))
    failures = sum(1 for r in records if r.error)
    click.echo(f"solved {len(records) - failures} / {len(records)} cases")


# --- evaluate -------------------------------------------------------------------


@main.command("evaluate")
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--answers", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--cassette-dir", type=click.Path(), default=None)
@click.option("--mode", type=click.Choice(["live", "record", "replay"]), default="replay")
@click.option("--judge-model", default="deepseek-chat")
@click.option("--answer-mode", type=click.Choice(["judge", "strict"]), default="judge")
@click.option("--bank", default=DEFAULT_BANK)
@click.option("--chat-provider", default="http", type=click.Choice(["http", "stub"]))
@click.option("--workers", type=int, default=1)
@click.option("--exit-status-on-failures", is_flag=True, default=False)
@click.option("--run-id", default=None)
def cli_evaluate(
    dataset, answers, out_dir, cassette_dir, mode, judge_model, answer_mode,
    bank, chat_provider, workers, exit_status_on_failures, run_id,
) -> None:
    """Judge answers step by step and write evaluations plus metrics."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        cases = {c.row_number: c for c in load_cases(dataset)}
        records = _load_answer_records(answers)
        library = _formula_library(bank)
        gateway = _gateway(mode, cassette_dir, "judge", chat_provider, None, workers=workers)
        config = JudgeConfig(model=judge_model, answer_mode=answer_mode)

        evaluable = []
        skipped = 0
        for record in records:
            if record.answer is None:
                skipped += 1
                continue
            if record.row_number not in cases:
                _fail(f"answers reference unknown row {record.row_number}")
            evaluable.append(record)

        def evaluate_one(record: AnswerRecord):
            case = cases[record.row_number]
            return evaluate_case(case, record.answer, gateway, library, config)

        evaluations = _run_pool(workers, evaluable, evaluate_one)
    except ClincalcError as exc:
        _fail(str(exc))
        return
    evaluations.sort(key=lambda e: e.row_number)
    if not evaluations:
        _fail("no evaluable answers (all records carry errors)")
        return
    categories = {c.row_number: c.category for c in cases.values()}
    metrics = compute_metrics(evaluations, categories)
    write_jsonl(out / "evaluations.jsonl", evaluations)
    payload = metrics.model_dump(mode="json", exclude={"per_case"})
    payload["skipped_answers"] = skipped
    write_json(out / "metrics.json", payload)
    (out / "metrics.csv").write_text(metrics_csv(payload), encoding="utf-8")
    manifest = make_manifest(
        "evaluate",
        Mode(mode),
        {
            "dataset": _input_ref(dataset),
            "answers": _input_ref(answers),
            "judge": config.model_dump(mode="json"),
        },
        dataset_path=dataset,
        namespaces=["judge"],
        run_id=run_id,
    )
    write_json(out / "manifest.json", manifest.model_dump(mode="json"))
    click.echo(
        f"evaluated {metrics.n_cases} cases: accuracy "
        f"{metrics.accuracy_overall:.4f}"
    )
    if exit_status_on_failures and metrics.accuracy_overall < 1.0:
        sys.exit(1)


# --- attribute ------------------------------------------------------------------


@main.command("attribute")
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--answers", required=True, type=click.Path(exists=True))
@click.option("--evaluations", "evaluations_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--cassette-dir", type=click.Path(), default=None)
@click.option("--mode", type=click.Choice(["live", "record", "replay"]), default="replay")
@click.option("--attribution-model", default="deepseek-reasoner")
@click.option("--bank", default=DEFAULT_BANK)
@click.option("--chat-provider", default="http", type=click.Choice(["http", "stub"]))
@click.option("--all", "attribute_all", is_flag=True, default=False,
              help="attribute every case, not only failures")
@click.option("--workers", type=int, default=1)
@click.option("--run-id", default=None)
def cli_attribute(
    dataset, answers, evaluations_path, out_dir, cassette_dir, mode,
    attribution_model, bank, chat_provider, attribute_all, workers, run_id,
) -> None:
    """Attribute failed cases to the eight error types; write counts CSV."""
    from .model import CaseEvaluation

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        cases = {c.row_number: c for c in load_cases(dataset)}
        records = {r.row_number: r for r in _load_answer_records(answers) if r.answer}
        evaluations = [
            CaseEvaluation.model_validate(row) for row in read_jsonl(evaluations_path)
        ]
        library = _formula_library(bank)
        gateway = _gateway(mode, cassette_dir, "attribution", chat_provider, None, workers=workers)
        config = AttributionConfig(model=attribution_model)

        target_rows = [
            e.row_number
            for e in evaluations
            if (attribute_all or not e.kappa) and e.row_number in records
        ]

        def attribute_one(row: int):
            record = records[row]
            return record.strategy.value, attribute(
                cases[row], record.answer, gateway, library, config
            )

        tagged = _run_pool(workers, target_rows, attribute_one)
    except ClincalcError as exc:
        _fail(str(exc))
        return
    tagged.sort(key=lambda pair: pair[1].row_number)
    write_jsonl(
        out / "attributions.jsonl",
        [
            {"strategy": strategy, **attribution.model_dump(mode="json")}
            for strategy, attribution in tagged
        ],
    )
    (out / "error_counts.csv").write_text(
        error_counts_csv(aggregate_error_counts(tagged)), encoding="utf-8"
    )
    manifest = make_manifest(
        "attribute",
        Mode(mode),
        {
            "dataset": _input_ref(dataset),
            "answers": _input_ref(answers),
            "evaluations": _input_ref(evaluations_path),
            "model": attribution_model,
            "all": attribute_all,
        },
        dataset_path=dataset,
        namespaces=["attribution"],
        run_id=run_id,
    )
    write_json(out / "manifest.json", manifest.model_dump(mode="json"))
    click.echo(f"attributed {len(tagged)} cases")


# --- retrieval bench ------------------------------------------------------------


@main.command("retrieval-bench")
@click.option("--bank", required=True)
@click.option("--queries", required=True, type=click.Path(exists=True))
@click.option("--ks", default="1,2")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--cassette-dir", type=click.Path(), default=None)
@click.option("--mode", type=click.Choice(["live", "record", "replay"]), default="replay")
@click.option("--embed-provider", default="ngram", type=click.Choice(["http", "mock", "ngram"]))
@click.option("--embed-model", default="ngram-v1")
@click.option("--run-id", default=None)
def cli_retrieval_bench(
    bank, queries, ks, out_dir, cassette_dir, mode, embed_provider, embed_model, run_id,
) -> None:
    """Top-k retrieval accuracy of the formula bank against gold queries."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        k_values = sorted({int(k) for k in ks.split(",") if k.strip()})
        gateway = _gateway(mode, cassette_dir, "embed", None, embed_provider, embed_model)
        index = build_index(_bank_entries(bank), gateway)
        query_rows = read_jsonl(queries)
        pairs = [
            (row["query"], int(row["gold_formula_id"])) for row in query_rows
        ]
        accuracy = eval_retrieval(index, pairs, k_values, gateway)
    except ClincalcError as exc:
        _fail(str(exc))
        return
    write_json(out / "retrieval_accuracy.json", {str(k): v for k, v in accuracy.items()})
    lines = ["k,accuracy"] + [f"{k},{accuracy[k]}" for k in k_values]
    (out / "retrieval_accuracy.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest = make_manifest(
        "retrieval-bench",
        Mode(mode),
        {"bank": bank if bank == DEFAULT_BANK else _input_ref(bank),
         "queries": _input_ref(queries), "ks": k_values,
         "embed_model": embed_model},
        dataset_path=queries,
        namespaces=["embed"],
        run_id=run_id,
    )
    write_json(out / "manifest.json", manifest.model_dump(mode="json"))
    for k in k_values:
        click.echo(f"accuracy@{k} = {accuracy[k]:.4f}")


# --- report ---------------------------------------------------------------------


@main.command("report")
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@click.option("--dataset", type=click.Path(exists=True), default=None)
@click.option("--specialty-map", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def cli_report(run_dir, dataset, specialty_map, out_path) -> None:
    """Join manifest, metrics, and counts into one markdown bundle."""
    try:
        mapping = load_specialty_map(specialty_map) if specialty_map else None
        text = build_report(run_dir, dataset, mapping)
    except ClincalcError as exc:
        _fail(str(exc))
        return
    target = Path(out_path) if out_path else Path(run_dir) / "report.md"
    target.write_text(text, encoding="utf-8")
    click.echo(f"wrote {target}")


if __name__ == "__main__":
    main()
