"""Domain types shared by every module, plus parsing of raw model output.

All types are immutable pydantic models so they can be shared freely
between worker threads. Parsing is pure and deliberately forgiving:
missing sections degrade to empty strings so a downstream judge can still
attribute a first error instead of the whole case aborting.
"""

from __future__ import annotations

import json
import re
from decimal import Decimal
from enum import Enum

from pydantic import BaseModel, ConfigDict, model_validator

from .errors import MalformedOutput


class Category(str, Enum):
    """Whether a calculator sums criterion points or evaluates a formula."""

    rule_based = "rule_based"
    equation_based = "equation_based"


class Step(str, Enum):
    """The four graded reasoning stages, in evaluation order."""

    formula = "formula"
    extraction = "extraction"
    calculation = "calculation"
    answer = "answer"


STEP_ORDER: tuple[Step, ...] = (
    Step.formula,
    Step.extraction,
    Step.calculation,
    Step.answer,
)


class Strategy(str, Enum):
    direct = "direct"
    cot = "cot"
    oneshot = "oneshot"
    self_refine = "self_refine"
    medprompt = "medprompt"
    medrac = "medrac"
    rag_only = "rag_only"
    code_only = "code_only"


CODE_STRATEGIES = frozenset({Strategy.medrac, Strategy.code_only})


class ErrorType(str, Enum):
    """The eight failure categories used for multi-label attribution."""

    formula_error = "formula_error"
    variable_extraction = "variable_extraction"
    clinical_misinterpretation = "clinical_misinterpretation"
    missing_variables = "missing_variables"
    unit_conversion = "unit_conversion"
    demographic_coefficient = "demographic_coefficient"
    arithmetic = "arithmetic"
    rounding_precision = "rounding_precision"


ERROR_TYPE_ORDER: tuple[ErrorType, ...] = tuple(ErrorType)


class ExtractedValue(BaseModel):
    """One named clinical variable: value text plus optional unit."""

    model_config = ConfigDict(frozen=True)

    value: str
    unit: str | None = None


class CaseRecord(BaseModel):
    """One benchmark item: note, question, and gold labels."""

    model_config = ConfigDict(frozen=True)

    row_number: int
    calculator_id: int
    calculator_name: str
    category: Category
    patient_note: str
    question: str
    gold_answer: str
    gold_numeric: Decimal | None = None
    lower_limit: Decimal | None = None
    upper_limit: Decimal | None = None
    gold_explanation: str = ""
    gold_entities: dict[str, ExtractedValue] = {}
    specialty: str | None = None
    limits_swapped: bool = False

    @model_validator(mode="after")
    def _check_limits(self) -> "CaseRecord":
        lo, hi = self.lower_limit, self.upper_limit
        if lo is not None and hi is not None and lo > hi:
            raise ValueError(f"lower_limit {lo} > upper_limit {hi}")
        if self.gold_numeric is not None and lo is not None and hi is not None:
            if not (lo <= self.gold_numeric <= hi):
                raise ValueError(
                    f"gold_numeric {self.gold_numeric} outside [{lo}, {hi}]"
                )
        return self


class StructuredAnswer(BaseModel):
    """A solver's four-part response plus optional executable code."""

    model_config = ConfigDict(frozen=True)

    formula_text: str = ""
    formula_reason: str = ""
    extracted_values: dict[str, ExtractedValue] = {}
    extraction_reason: str = ""
    calculation_trace: str = ""
    code: str | None = None
    final_answer_text: str = ""
    final_numeric: Decimal | None = None
    raw_response: str
    strategy: Strategy

    @model_validator(mode="after")
    def _check_invariants(self) -> "StructuredAnswer":
        if self.final_numeric is not None:
            parsed = parse_final_numeric(self.final_answer_text)
            if parsed != self.final_numeric:
                raise ValueError(
                    f"final_numeric {self.final_numeric} does not parse from "
                    f"final_answer_text {self.final_answer_text!r}"
                )
        if self.code is not None and self.strategy not in CODE_STRATEGIES:
            raise ValueError(f"strategy {self.strategy.value} cannot carry code")
        if self.strategy is not Strategy.direct and not self.raw_response:
            raise ValueError("raw_response must be non-empty for this strategy")
        return self


class StepVerdict(BaseModel):
    """One judge verdict: the raw call plus its gated version."""

    model_config = ConfigDict(frozen=True)

    step: Step
    raw_correct: bool
    explanation: str = ""
    gated_correct: bool
    judge_failure: bool = False

    @model_validator(mode="after")
    def _check_gate(self) -> "StepVerdict":
        if self.gated_correct and not self.raw_correct:
            raise ValueError("gated_correct requires raw_correct")
        return self


class CaseEvaluation(BaseModel):
    """The four gated verdicts for one case plus the case-level outcome."""

    model_config = ConfigDict(frozen=True)

    row_number: int
    verdicts: tuple[StepVerdict, StepVerdict, StepVerdict, StepVerdict]
    kappa: bool
    first_error: Step | None = None

    @model_validator(mode="after")
    def _check_chain(self) -> "CaseEvaluation":
        steps = tuple(v.step for v in self.verdicts)
        if steps != STEP_ORDER:
            raise ValueError(f"verdicts must cover {STEP_ORDER}, got {steps}")
        prev_gated = True
        for v in self.verdicts:
            if v.gated_correct and not prev_gated:
                raise ValueError(f"{v.step.value} gated without predecessor gated")
            prev_gated = v.gated_correct
        if self.kappa != all(v.gated_correct for v in self.verdicts):
            raise ValueError("kappa must equal the conjunction of gated verdicts")
        expected_first = next(
            (v.step for v in self.verdicts if not v.raw_correct), None
        )
        if self.kappa and self.first_error is not None:
            raise ValueError("first_error must be absent when kappa is true")
        if not self.kappa and self.first_error != expected_first:
            raise ValueError(
                f"first_error should be {expected_first}, got {self.first_error}"
            )
        return self

    @classmethod
    def from_raw(
        cls,
        row_number: int,
        raw: dict[Step, tuple[bool, str]] | dict[Step, tuple[bool, str, bool]],
    ) -> "CaseEvaluation":
        """Build an evaluation from per-step raw verdicts, applying gating."""
        verdicts = []
        gated_prev = True
        for step in STEP_ORDER:
            entry = raw[step]
            raw_ok, explanation = entry[0], entry[1]
            failure = bool(entry[2]) if len(entry) > 2 else False
            gated = raw_ok and gated_prev
            verdicts.append(
                StepVerdict(
                    step=step,
                    raw_correct=raw_ok,
                    explanation=explanation,
                    gated_correct=gated,
                    judge_failure=failure,
                )
            )
            gated_prev = gated
        kappa = all(v.gated_correct for v in verdicts)
        first_error = next((v.step for v in verdicts if not v.raw_correct), None)
        return cls(
            row_number=row_number,
            verdicts=tuple(verdicts),
            kappa=kappa,
            first_error=first_error,
        )


# --- numeric extraction -----------------------------------------------------

# A standalone literal: not glued onto a preceding word/number, not the
# prefix of a longer dotted number. Thousands separators are accepted.
_NUMBER = re.compile(
    r"(?<![\w.])[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?(?!\.?\d)"
)


def _last_numeric_literal(text: str) -> str | None:
    matches = _NUMBER.findall(text)
    return matches[-1] if matches else None


def parse_final_numeric(text: str) -> Decimal | None:
    """Return the last standalone decimal literal in the text, if any.

    Thousands separators are ignored; total over arbitrary input.
    """
    literal = _last_numeric_literal(text)
    if literal is None:
        return None
    return Decimal(literal.replace(",", ""))


# --- structured-answer parsing ----------------------------------------------

_FENCE = re.compile(r"```([A-Za-z0-9_+-]*)[ \t]*\r?\n(.*?)```", re.DOTALL)

SANDBOX_LANGUAGE = "python"


def find_fenced_blocks(text: str) -> list[tuple[str, str]]:
    """All fenced code blocks as (language tag, body) pairs."""
    return [(m.group(1).lower(), m.group(2)) for m in _FENCE.finditer(text)]


def first_json_object(text: str) -> dict | None:
    """First parseable JSON object in the text, tolerant of fences and prose."""
    decoder = json.JSONDecoder()
    for match in re.finditer(r"\{", text):
        try:
            obj, _ = decoder.raw_decode(text, match.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def _as_text(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (dict, list)):
        return json.dumps(value, ensure_ascii=False)
    return str(value)


def _parse_entities(value: object) -> dict[str, ExtractedValue]:
    if not isinstance(value, dict):
        return {}
    entities: dict[str, ExtractedValue] = {}
    for name, item in value.items():
        if isinstance(item, dict):
            entities[str(name)] = ExtractedValue(
                value=_as_text(item.get("value")),
                unit=item.get("unit") if isinstance(item.get("unit"), str) else None,
            )
        elif isinstance(item, (list, tuple)) and item:
            unit = item[1] if len(item) > 1 and isinstance(item[1], str) else None
            entities[str(name)] = ExtractedValue(value=_as_text(item[0]), unit=unit)
        else:
            entities[str(name)] = ExtractedValue(value=_as_text(item))
    return entities


def parse_structured_answer(
    raw: str, strategy: Strategy = Strategy.cot
) -> StructuredAnswer:
    """Parse a raw assistant message into the four-part structured answer.

    Every locatable section is filled; missing sections become empty text.
    Only a genuinely empty message is an error.
    """
    if not raw or not raw.strip():
        raise MalformedOutput("model output is empty")

    code: str | None = None
    if strategy in CODE_STRATEGIES:
        for lang, body in find_fenced_blocks(raw):
            if lang == SANDBOX_LANGUAGE:
                code = body
                break

    obj = first_json_object(raw)
    if obj is None:
        literal = _last_numeric_literal(raw)
        return StructuredAnswer(
            code=code,
            final_answer_text=literal or "",
            final_numeric=Decimal(literal.replace(",", "")) if literal else None,
            raw_response=raw,
            strategy=strategy,
        )

    final_answer_text = _as_text(obj.get("final_answer"))
    return StructuredAnswer(
        formula_text=_as_text(obj.get("formula")),
        formula_reason=_as_text(obj.get("formula_reason")),
        extracted_values=_parse_entities(obj.get("extracted_values")),
        extraction_reason=_as_text(obj.get("extraction_reason")),
        calculation_trace=_as_text(obj.get("calculation")),
        code=code,
        final_answer_text=final_answer_text,
        final_numeric=parse_final_numeric(final_answer_text),
        raw_response=raw,
        strategy=strategy,
    )


def to_solver_json(answer: StructuredAnswer) -> str:
    """Render an answer back into the documented solver JSON format.

    Inverse of ``parse_structured_answer`` up to raw_response: parsing the
    result yields field-equal sections. Code, when present, is appended as
    one fenced block after the JSON object.
    """
    entities: dict[str, object] = {}
    for name, item in answer.extracted_values.items():
        if item.unit is None:
            entities[name] = item.value
        else:
            entities[name] = {"value": item.value, "unit": item.unit}
    payload: dict[str, object] = {
        "formula": answer.formula_text,
        "formula_reason": answer.formula_reason,
        "extracted_values": entities,
        "calculation": answer.calculation_trace,
        "final_answer": answer.final_answer_text,
    }
    if answer.extraction_reason:
        payload["extraction_reason"] = answer.extraction_reason
    text = json.dumps(payload, indent=2, ensure_ascii=False)
    if answer.code is not None:
        text += f"\n\n```{SANDBOX_LANGUAGE}\n{answer.code}```\n"
    return text
