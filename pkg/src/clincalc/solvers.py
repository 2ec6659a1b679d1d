"""Answer generation: the five prompting baselines plus the retrieval+code
pipeline and its two ablations.

Every strategy is a pure function of (case, config, cassette state): the
prompt templates are committed files, exemplar and neighbor selection are
deterministic, and the code path takes the sandbox's returned value as the
final answer without any host-side re-rounding.
"""

from __future__ import annotations

import numpy as np

from pydantic import BaseModel, ConfigDict, model_validator

from .dataset import select_oneshot_example
from .errors import MissingExtras, MissingResource, NoCodeEmitted, SandboxFailure
from .gateway import ChatRequest, LLMGateway
from .model import (
    CaseRecord,
    SANDBOX_LANGUAGE,
    Strategy,
    StructuredAnswer,
    find_fenced_blocks,
    parse_final_numeric,
    parse_structured_answer,
)
from .judge import parse_verdict
from .errors import UnparseableVerdict
from .prompting import load_template, render
from .retrieval import FormulaEntry, FormulaIndex, cosine_scores, retrieve
from .sandbox import SandboxClient, SandboxJob


class SolveConfig(BaseModel):
    """Per-run solver settings; sampling fields of None use provider
    defaults."""

    model_config = ConfigDict(frozen=True)

    strategy: Strategy
    model: str
    retrieval_k: int = 2
    refine_max_rounds: int = 5
    knn_k: int = 3
    sandbox_timeout_s: float = 10.0
    sandbox_memory_mb: int = 256
    fallback_on_no_code: str = "fail"  # "fail" | "cot"
    retrieval_query_includes_note: bool = False
    temperature: float | None = None
    top_p: float | None = None
    repetition_penalty: float | None = None
    max_tokens: int | None = None

    @model_validator(mode="after")
    def _check(self) -> "SolveConfig":
        if self.refine_max_rounds < 1:
            raise ValueError("refine_max_rounds must be >= 1")
        if self.retrieval_k < 1 or self.knn_k < 1:
            raise ValueError("retrieval_k and knn_k must be >= 1")
        if self.fallback_on_no_code not in ("fail", "cot"):
            raise ValueError(f"unknown fallback {self.fallback_on_no_code!r}")
        return self


def extract_code(raw: str) -> str | None:
    """First fenced block tagged for the sandbox language; a single untagged
    fence is accepted as fallback."""
    blocks = find_fenced_blocks(raw)
    for lang, body in blocks:
        if lang == SANDBOX_LANGUAGE:
            return body
    if len(blocks) == 1 and blocks[0][0] == "":
        return blocks[0][1]
    return None


def format_formulas(entries: list[FormulaEntry]) -> str:
    parts = []
    for i, entry in enumerate(entries, start=1):
        parts.append(f"[{i}] {entry.name}\n{entry.description}\n{entry.expression}")
    return "\n\n".join(parts)


def format_demonstrations(neighbors: list[CaseRecord]) -> str:
    parts = []
    for case in neighbors:
        parts.append(
            "Patient note:\n"
            f"{case.patient_note}\n\n"
            "Question:\n"
            f"{case.question}\n\n"
            "Worked solution:\n"
            f"{case.gold_explanation}\n\n"
            "Final answer:\n"
            f"{case.gold_answer}"
        )
    return "\n\n---\n\n".join(parts)


def build_strategy_prompt(
    case: CaseRecord, config: SolveConfig, extras: dict | None = None
) -> tuple[str, str]:
    """System and user prompts for a strategy's first (or only) chat call."""
    extras = extras or {}
    system = load_template("solve", "system")
    mapping = {
        "note": case.patient_note,
        "question": case.question,
        "format_block": load_template("solve", "format_block"),
    }
    strategy = config.strategy
    if strategy is Strategy.oneshot:
        exemplar = extras.get("exemplar")
        if exemplar is None:
            raise MissingExtras("oneshot prompt needs an exemplar case")
        mapping.update(
            example_note=exemplar.patient_note,
            example_question=exemplar.question,
            example_explanation=exemplar.gold_explanation,
            example_answer=exemplar.gold_answer,
        )
    elif strategy is Strategy.medprompt:
        neighbors = extras.get("neighbors")
        if not neighbors:
            raise MissingExtras("medprompt prompt needs neighbor cases")
        mapping["demonstrations"] = format_demonstrations(neighbors)
    elif strategy in (Strategy.medrac, Strategy.rag_only):
        formulas = extras.get("formulas")
        if not formulas:
            raise MissingExtras(f"{strategy.value} prompt needs retrieved formulas")
        mapping["formulas"] = format_formulas(formulas)
    template_name = {
        Strategy.self_refine: "cot",  # initial draft uses the cot template
    }.get(strategy, strategy.value)
    user = render(load_template("solve", f"{template_name}.user"), mapping)
    return system, user


def _chat(gateway: LLMGateway, config: SolveConfig, system: str, user: str) -> str:
    return gateway.chat(
        ChatRequest(
            model=config.model,
            system=system,
            user=user,
            temperature=config.temperature,
            top_p=config.top_p,
            repetition_penalty=config.repetition_penalty,
            max_tokens=config.max_tokens,
        )
    )


def _knn_neighbors(
    case: CaseRecord, pool: list[CaseRecord], k: int, gateway: LLMGateway
) -> list[CaseRecord]:
    """Nearest pool cases by question embedding, query case excluded."""
    others = [c for c in pool if c.row_number != case.row_number]
    if not others:
        raise MissingResource("medprompt needs a non-empty exemplar pool")
    vectors = gateway.embed([c.question for c in others])
    matrix = np.array([v.values for v in vectors], dtype=np.float64)
    query = np.array(gateway.embed([case.question])[0].values, dtype=np.float64)
    scores = cosine_scores(matrix, np.linalg.norm(matrix, axis=1), query)
    order = sorted(
        range(len(others)), key=lambda i: (-scores[i], others[i].row_number)
    )
    return [others[i] for i in order[:k]]


def _run_code(
    case: CaseRecord,
    config: SolveConfig,
    raw: str,
    sandbox: SandboxClient,
) -> StructuredAnswer:
    code = extract_code(raw)
    if code is None:
        if config.fallback_on_no_code == "fail":
            raise NoCodeEmitted(
                f"row {case.row_number}: response contains no executable "
                f"{SANDBOX_LANGUAGE} block"
            )
        return parse_structured_answer(raw, config.strategy)
    job = SandboxJob(
        job_id=f"row{case.row_number}-{config.strategy.value}",
        code=code,
        timeout_s=config.sandbox_timeout_s,
        memory_mb=config.sandbox_memory_mb,
    )
    result = sandbox.execute(job)
    if result.status != "ok":
        raise SandboxFailure(
            f"row {case.row_number}: sandbox status {result.status}: "
            f"{result.stderr[:500]}",
            status=result.status,
            stderr=result.stderr,
        )
    # The executed value *is* the final answer; render it without exponent
    # notation and never re-round.
    final_text = format(result.result, "f")
    parsed = parse_structured_answer(raw, config.strategy)
    return parsed.model_copy(
        update={
            "code": code,
            "final_answer_text": final_text,
            "final_numeric": result.result,
        }
    )


def solve(
    case: CaseRecord,
    config: SolveConfig,
    gateway: LLMGateway,
    index: FormulaIndex | None = None,
    exemplar_pool: list[CaseRecord] | None = None,
    sandbox: SandboxClient | None = None,
) -> StructuredAnswer:
    """Produce a StructuredAnswer for one case under the configured strategy."""
    strategy = config.strategy
    if strategy in (Strategy.medrac, Strategy.rag_only) and index is None:
        raise MissingResource(f"{strategy.value} requires a formula index")
    if strategy in (Strategy.oneshot, Strategy.medprompt) and not exemplar_pool:
        raise MissingResource(f"{strategy.value} requires an exemplar pool")
    if strategy in (Strategy.medrac, Strategy.code_only) and sandbox is None:
        raise MissingResource(f"{strategy.value} requires a sandbox runner")

    if strategy is Strategy.direct:
        system, user = build_strategy_prompt(case, config)
        raw = _chat(gateway, config, system, user)
        literal = raw.strip()
        return StructuredAnswer(
            final_answer_text=literal,
            final_numeric=parse_final_numeric(literal),
            raw_response=raw,
            strategy=strategy,
        )

    if strategy in (Strategy.cot,):
        system, user = build_strategy_prompt(case, config)
        return parse_structured_answer(_chat(gateway, config, system, user), strategy)

    if strategy is Strategy.oneshot:
        exemplar = select_oneshot_example(case, exemplar_pool or [])
        system, user = build_strategy_prompt(case, config, {"exemplar": exemplar})
        return parse_structured_answer(_chat(gateway, config, system, user), strategy)

    if strategy is Strategy.self_refine:
        system, user = build_strategy_prompt(case, config)
        current = _chat(gateway, config, system, user)
        critique_template = load_template("solve", "self_refine_critique.user")
        revise_template = load_template("solve", "self_refine_revise.user")
        for _ in range(config.refine_max_rounds):
            critique_user = render(
                critique_template,
                {
                    "note": case.patient_note,
                    "question": case.question,
                    "answer": current,
                },
            )
            critique_raw = _chat(gateway, config, system, critique_user)
            try:
                no_error, critique_text = parse_verdict(critique_raw)
            except UnparseableVerdict:
                break  # an unreadable critique cannot direct a revision
            if no_error:
                break
            revise_user = render(
                revise_template,
                {
                    "note": case.patient_note,
                    "question": case.question,
                    "answer": current,
                    "critique": critique_text,
                },
            )
            current = _chat(gateway, config, system, revise_user)
        return parse_structured_answer(current, strategy)

    if strategy is Strategy.medprompt:
        neighbors = _knn_neighbors(case, exemplar_pool or [], config.knn_k, gateway)
        system, user = build_strategy_prompt(case, config, {"neighbors": neighbors})
        return parse_structured_answer(_chat(gateway, config, system, user), strategy)

    if strategy in (Strategy.medrac, Strategy.rag_only):
        assert index is not None
        query = case.question
        if config.retrieval_query_includes_note:
            query = f"{case.question}\n{case.patient_note}"
        retrieved = [
            entry for entry, _ in retrieve(index, query, config.retrieval_k, gateway)
        ]
        system, user = build_strategy_prompt(case, config, {"formulas": retrieved})
        raw = _chat(gateway, config, system, user)
        if strategy is Strategy.rag_only:
            return parse_structured_answer(raw, strategy)
        assert sandbox is not None
        return _run_code(case, config, raw, sandbox)

    if strategy is Strategy.code_only:
        system, user = build_strategy_prompt(case, config)
        raw = _chat(gateway, config, system, user)
        assert sandbox is not None
        return _run_code(case, config, raw, sandbox)

    raise ValueError(f"unhandled strategy {strategy}")  # pragma: no cover
