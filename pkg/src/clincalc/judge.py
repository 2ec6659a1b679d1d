"""The four-stage evaluation: prompts, verdict parsing, gating, and metrics.

Each case is judged on formula choice, value extraction, arithmetic, and
final answer. All four judges always run (the raw verdicts feed the error
tables); gating is applied afterwards, so a step can only count as correct
when every earlier step was. Case correctness is the conjunction of the
gated verdicts.
"""

from __future__ import annotations

import re

from pydantic import BaseModel, ConfigDict, model_validator

from .errors import (
    EmptyInput,
    LengthMismatch,
    MissingResource,
    ProviderError,
    UnparseableVerdict,
)
from .gateway import ChatRequest, LLMGateway
from .model import (
    STEP_ORDER,
    CaseEvaluation,
    CaseRecord,
    Category,
    Step,
    StructuredAnswer,
    _last_numeric_literal,
    first_json_object,
)
from .prompting import load_template, render
from .tolerance import strict_match

# The extraction step's prompt is titled after the answer field it checks.
STEP_TEMPLATE_NAMES: dict[Step, str] = {
    Step.formula: "formula",
    Step.extraction: "extracted_values",
    Step.calculation: "calculation",
    Step.answer: "answer",
}


class StepReference(BaseModel):
    """Gold-standard text shown to a step judge; empty for calculation,
    which is judged on the model's own arithmetic alone."""

    model_config = ConfigDict(frozen=True)

    step: Step
    reference_text: str

    @model_validator(mode="after")
    def _calculation_is_blind(self) -> "StepReference":
        if self.step is Step.calculation and self.reference_text != "":
            raise ValueError("calculation reference must be empty")
        return self


class JudgeConfig(BaseModel):
    """Judge model and mode; identity is configuration, defaulting to the
    documented step-judge model."""

    model_config = ConfigDict(frozen=True)

    model: str = "deepseek-chat"
    temperature: float | None = None
    top_p: float | None = None
    max_tokens: int | None = None
    answer_mode: str = "judge"  # "judge" | "strict"

    @model_validator(mode="after")
    def _check_mode(self) -> "JudgeConfig":
        if self.answer_mode not in ("judge", "strict"):
            raise ValueError(f"unknown answer_mode {self.answer_mode!r}")
        return self


def build_step_prompt(step: Step, answer_part: str, reference: str) -> tuple[str, str]:
    """System and user prompts for one step judge.

    The calculation prompt omits the reference entirely; the others embed
    it under the gold-standard heading.
    """
    system = load_template("eval", "system")
    template = load_template("eval", f"{STEP_TEMPLATE_NAMES[step]}.user")
    user = render(template, {"answer": answer_part, "reference": reference})
    return system, user


def parse_verdict(raw: str) -> tuple[bool, str]:
    """Extract (correct, explanation) from a judge response.

    Tolerant of code fences and leading prose; raises UnparseableVerdict
    when no result can be found, so the caller can score the step incorrect
    and flag it for audit instead of dropping it.
    """
    obj = first_json_object(raw)
    if obj is None or "result" not in obj:
        raise UnparseableVerdict(f"no verdict JSON in: {raw[:200]!r}")
    word = re.sub(r"[^a-z]", "", str(obj["result"]).lower())
    if word == "correct":
        ok = True
    elif word == "incorrect":
        ok = False
    else:
        raise UnparseableVerdict(f"unrecognized result {obj['result']!r}")
    explanation = obj.get("explanation", "")
    return ok, explanation if isinstance(explanation, str) else str(explanation)


def render_entities(entities: dict) -> str:
    """Canonical text form of an entity map: one name = value [unit] line
    per entry, sorted by name so prompts never depend on map order."""
    lines = []
    for name in sorted(entities):
        item = entities[name]
        unit = getattr(item, "unit", None)
        value = getattr(item, "value", item)
        lines.append(f"{name} = {value}" + (f" {unit}" if unit else ""))
    return "\n".join(lines)


def build_references(
    case: CaseRecord, formula_library: dict[int, str]
) -> dict[Step, StepReference]:
    """Per-step gold references: library formula, gold entity map, nothing,
    and the gold answer."""
    if case.calculator_id not in formula_library:
        raise MissingResource(
            f"no reference formula for calculator {case.calculator_id}"
        )
    return {
        Step.formula: StepReference(
            step=Step.formula, reference_text=formula_library[case.calculator_id]
        ),
        Step.extraction: StepReference(
            step=Step.extraction, reference_text=render_entities(case.gold_entities)
        ),
        Step.calculation: StepReference(step=Step.calculation, reference_text=""),
        Step.answer: StepReference(step=Step.answer, reference_text=case.gold_answer),
    }


def answer_parts(answer: StructuredAnswer) -> dict[Step, str]:
    """The slice of the structured answer each step judge sees."""
    formula = answer.formula_text
    if answer.formula_reason:
        formula = f"{formula}\nReason: {answer.formula_reason}".lstrip("\n")
    extraction = render_entities(answer.extracted_values)
    if answer.extraction_reason:
        extraction = f"{extraction}\nReason: {answer.extraction_reason}".lstrip("\n")
    calculation = answer.calculation_trace or (answer.code or "")
    return {
        Step.formula: formula,
        Step.extraction: extraction,
        Step.calculation: calculation,
        Step.answer: answer.final_answer_text,
    }


def _strict_answer_verdict(
    case: CaseRecord, answer: StructuredAnswer
) -> tuple[bool, str]:
    if case.gold_numeric is None:
        return False, "strict mode: gold answer is not numeric"
    # Precision is read off the answer literal as written, so compare the
    # text (last standalone literal), not a re-rendered numeric.
    literal = _last_numeric_literal(answer.final_answer_text)
    if literal is None:
        return False, "strict mode: no numeric final answer"
    ok, spec = strict_match(literal, case.gold_numeric)
    return ok, (
        f"strict mode: {literal} vs {case.gold_numeric} with tolerance "
        f"{spec.tolerance} at {spec.effective_places} decimal places -> "
        f"{'match' if ok else 'mismatch'}"
    )


def evaluate_case(
    case: CaseRecord,
    answer: StructuredAnswer,
    gateway: LLMGateway,
    formula_library: dict[int, str],
    config: JudgeConfig | None = None,
) -> CaseEvaluation:
    """Run all four step judges for one case and apply gating.

    Raw verdicts are always collected for all four steps (diagnostics need
    them); provider failures and unparseable verdicts score the step
    incorrect with judge_failure set, never abort the case.
    """
    config = config or JudgeConfig()
    references = build_references(case, formula_library)
    parts = answer_parts(answer)

    raw: dict[Step, tuple[bool, str, bool]] = {}
    for step in STEP_ORDER:
        if step is Step.answer and config.answer_mode == "strict":
            ok, explanation = _strict_answer_verdict(case, answer)
            raw[step] = (ok, explanation, False)
            continue
        system, user = build_step_prompt(
            step, parts[step], references[step].reference_text
        )
        request = ChatRequest(
            model=config.model,
            system=system,
            user=user,
            temperature=config.temperature,
            top_p=config.top_p,
            max_tokens=config.max_tokens,
        )
        try:
            response = gateway.chat(request)
            ok, explanation = parse_verdict(response)
            raw[step] = (ok, explanation, False)
        except UnparseableVerdict as exc:
            raw[step] = (False, f"judge_failure: {exc}", True)
        except ProviderError as exc:
            raw[step] = (False, f"judge_failure: provider error: {exc}", True)
    return CaseEvaluation.from_raw(case.row_number, raw)


class EvalMetrics(BaseModel):
    """Aggregate outcome: accuracy, conditional correctness, and first-error
    attribution per step."""

    model_config = ConfigDict(frozen=True)

    n_cases: int
    accuracy_overall: float
    accuracy_by_category: dict[str, float] = {}
    cc: dict[Step, float]
    fe: dict[Step, float]
    per_case: list[CaseEvaluation]

    @model_validator(mode="after")
    def _check_bounds(self) -> "EvalMetrics":
        for name, table in (("cc", self.cc), ("fe", self.fe)):
            for step, value in table.items():
                if not (0.0 <= value <= 1.0):
                    raise ValueError(f"{name}[{step}] = {value} outside [0, 1]")
        if self.fe:
            total = sum(self.fe.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"fe must sum to 1, got {total}")
        return self


def compute_metrics(
    evals: list[CaseEvaluation],
    categories: dict[int, Category] | None = None,
) -> EvalMetrics:
    """Accuracy, CC, and FE from per-case evaluations.

    CC for a step is computed among cases whose earlier steps were all
    raw-correct and omitted entirely when no case qualifies; FE is the
    share of failed cases whose first raw failure is that step.
    """
    if not evals:
        raise EmptyInput("no evaluations to aggregate")

    n = len(evals)
    accuracy = sum(1 for e in evals if e.kappa) / n

    cc: dict[Step, float] = {}
    for i, step in enumerate(STEP_ORDER):
        eligible = [e for e in evals if all(v.raw_correct for v in e.verdicts[:i])]
        if eligible:
            hits = sum(1 for e in eligible if e.verdicts[i].raw_correct)
            cc[step] = hits / len(eligible)

    failures = [e for e in evals if not e.kappa]
    fe: dict[Step, float] = {}
    if failures:
        for step in STEP_ORDER:
            count = sum(1 for e in failures if e.first_error is step)
            if count:
                fe[step] = count / len(failures)

    by_category: dict[str, float] = {}
    if categories:
        for category in Category:
            members = [e for e in evals if categories.get(e.row_number) is category]
            if members:
                by_category[category.value] = sum(
                    1 for e in members if e.kappa
                ) / len(members)

    return EvalMetrics(
        n_cases=n,
        accuracy_overall=accuracy,
        accuracy_by_category=by_category,
        cc=cc,
        fe=fe,
        per_case=list(evals),
    )


def percent_agreement(a: list[bool], b: list[bool]) -> float:
    """Mean of the indicator that paired labels agree."""
    if len(a) != len(b):
        raise LengthMismatch(f"lengths differ: {len(a)} vs {len(b)}")
    if not a:
        raise EmptyInput("agreement needs at least one pair")
    return sum(1 for x, y in zip(a, b) if x == y) / len(a)
