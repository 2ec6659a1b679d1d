"""Multi-label error attribution over the eight failure categories.

Attribution is independent of the step-wise evaluation: given the same
answer, the eight type judges each see exactly the context their prompt
declares (and nothing else) plus the full raw answer, and each returns a
yes/no flag with an explanation. Aggregation produces the per-strategy
error-count table.
"""

from __future__ import annotations

import csv
import io
import re

from pydantic import BaseModel, ConfigDict, model_validator

from .errors import MissingContextField, ProviderError, UnparseableVerdict
from .gateway import ChatRequest, LLMGateway
from .model import (
    ERROR_TYPE_ORDER,
    CaseRecord,
    ErrorType,
    StructuredAnswer,
    first_json_object,
)
from .judge import render_entities
from .prompting import load_template, render

# The label substituted into the shared system template for each type.
# These follow the judge prompts' own naming, which differs slightly from
# the taxonomy figure labels (e.g. "Formula Error" covers both misselection
# and hallucinated structure).
ERROR_TYPE_LABELS: dict[ErrorType, str] = {
    ErrorType.formula_error: "Formula Error",
    ErrorType.variable_extraction: "Incorrect Variable Extraction Error",
    ErrorType.clinical_misinterpretation: "Clinical Misinterpretation Error",
    ErrorType.missing_variables: "Missing Variable Extraction Error",
    ErrorType.unit_conversion: "Unit Conversion Error",
    ErrorType.demographic_coefficient: "Missing or Misused Demographic/Adjustment Coefficient Error",
    ErrorType.arithmetic: "Arithmetic Error",
    ErrorType.rounding_precision: "Rounding / Precision Error",
}

# Exactly the context fields each builder consumes.
CONTEXT_FIELDS: dict[ErrorType, tuple[str, ...]] = {
    ErrorType.formula_error: ("gold_formula", "answer"),
    ErrorType.variable_extraction: ("note", "question", "gold_extraction", "answer"),
    ErrorType.missing_variables: ("note", "question", "gold_extraction", "answer"),
    ErrorType.clinical_misinterpretation: (
        "note",
        "question",
        "gold_explanation",
        "answer",
    ),
    ErrorType.unit_conversion: ("note", "question", "gold_explanation", "answer"),
    ErrorType.demographic_coefficient: (
        "note",
        "question",
        "gold_explanation",
        "answer",
    ),
    ErrorType.arithmetic: ("answer",),
    ErrorType.rounding_precision: ("gold_explanation", "answer"),
}


class ErrorAttribution(BaseModel):
    """Flags and explanations for all eight error types of one case."""

    model_config = ConfigDict(frozen=True)

    row_number: int
    flags: dict[ErrorType, bool]
    explanations: dict[ErrorType, str]

    @model_validator(mode="after")
    def _check_completeness(self) -> "ErrorAttribution":
        if set(self.flags) != set(ErrorType):
            missing = set(ErrorType) - set(self.flags)
            raise ValueError(f"flags must cover all eight types; missing {missing}")
        for error_type, flagged in self.flags.items():
            if flagged and not self.explanations.get(error_type):
                raise ValueError(f"flagged type {error_type.value} lacks explanation")
        return self

    def flagged_types(self) -> set[ErrorType]:
        return {t for t, flagged in self.flags.items() if flagged}


class AttributionConfig(BaseModel):
    """Attribution judge model; defaults to the documented reasoning-tier
    error-type judge."""

    model_config = ConfigDict(frozen=True)

    model: str = "deepseek-reasoner"
    temperature: float | None = None
    top_p: float | None = None
    max_tokens: int | None = None


def build_error_prompt(
    error_type: ErrorType, context: dict[str, str]
) -> tuple[str, str]:
    """System and user prompts for one error-type judge.

    Absent declared fields fail loudly; extra context keys are ignored.
    """
    required = CONTEXT_FIELDS[error_type]
    missing = [name for name in required if context.get(name) is None]
    if missing:
        raise MissingContextField(
            f"{error_type.value} prompt needs {missing}, got {sorted(context)}"
        )
    system = render(
        load_template("error", "system"),
        {"error_type": ERROR_TYPE_LABELS[error_type]},
    )
    user = render(
        load_template("error", f"{error_type.value}.user"),
        {name: context[name] for name in required},
    )
    return system, user


def parse_error_verdict(raw: str) -> tuple[bool, str]:
    """Extract (error_present, explanation) from a type-judge response."""
    obj = first_json_object(raw)
    if obj is None or "error_present" not in obj:
        raise UnparseableVerdict(f"no error_present JSON in: {raw[:200]!r}")
    word = re.sub(r"[^a-z]", "", str(obj["error_present"]).lower())
    if word == "yes":
        present = True
    elif word == "no":
        present = False
    else:
        raise UnparseableVerdict(f"unrecognized error_present {obj['error_present']!r}")
    explanation = obj.get("explanation", "")
    return present, explanation if isinstance(explanation, str) else str(explanation)


def attribution_context(
    case: CaseRecord, answer: StructuredAnswer, gold_formula: str
) -> dict[str, str]:
    """Everything any builder may consume; each builder takes its subset.

    Type judges see the full raw answer, not a parsed fragment.
    """
    return {
        "note": case.patient_note,
        "question": case.question,
        "gold_formula": gold_formula,
        "gold_extraction": render_entities(case.gold_entities),
        "gold_explanation": case.gold_explanation,
        "answer": answer.raw_response,
    }


def attribute(
    case: CaseRecord,
    answer: StructuredAnswer,
    gateway: LLMGateway,
    formula_library: dict[int, str],
    config: AttributionConfig | None = None,
) -> ErrorAttribution:
    """Run the eight type judges for one case.

    Provider failures and unparseable verdicts yield flag=False with a
    judge_failure note; they never abort the case.
    """
    config = config or AttributionConfig()
    context = attribution_context(
        case, answer, formula_library.get(case.calculator_id, "")
    )
    flags: dict[ErrorType, bool] = {}
    explanations: dict[ErrorType, str] = {}
    for error_type in ERROR_TYPE_ORDER:
        system, user = build_error_prompt(error_type, context)
        request = ChatRequest(
            model=config.model,
            system=system,
            user=user,
            temperature=config.temperature,
            top_p=config.top_p,
            max_tokens=config.max_tokens,
        )
        try:
            present, explanation = parse_error_verdict(gateway.chat(request))
            flags[error_type] = present
            explanations[error_type] = explanation or (
                "error present" if present else ""
            )
        except UnparseableVerdict as exc:
            flags[error_type] = False
            explanations[error_type] = f"judge_failure: {exc}"
        except ProviderError as exc:
            flags[error_type] = False
            explanations[error_type] = f"judge_failure: provider error: {exc}"
    return ErrorAttribution(
        row_number=case.row_number, flags=flags, explanations=explanations
    )


def jaccard(a: set, b: set) -> float:
    """|a n b| / |a u b|; two empty sets agree perfectly (1.0)."""
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def aggregate_error_counts(
    tagged: list[tuple[str, ErrorAttribution]],
) -> dict[str, dict[ErrorType, int]]:
    """Count flagged types per strategy, rows in first-seen strategy order."""
    table: dict[str, dict[ErrorType, int]] = {}
    for strategy, attribution in tagged:
        row = table.setdefault(strategy, {t: 0 for t in ERROR_TYPE_ORDER})
        for error_type in attribution.flagged_types():
            row[error_type] += 1
    return table


def error_counts_csv(table: dict[str, dict[ErrorType, int]]) -> str:
    """CSV with one row per strategy and the eight types as columns, in
    the fixed taxonomy order."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["strategy", *(t.value for t in ERROR_TYPE_ORDER)])
    for strategy, row in table.items():
        writer.writerow([strategy, *(row[t] for t in ERROR_TYPE_ORDER)])
    return buffer.getvalue()
