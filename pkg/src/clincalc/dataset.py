"""Benchmark case loading, the cleaning filter, and exemplar selection.

The loader never crashes on known data bugs: reversed negative limits are
normalized (and flagged) at load time even though such rows are removed by
the cleaning filter afterwards. The removal list itself ships as a
versioned data file so corrected lists can be deployed without code
changes.
"""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from importlib import resources
from pathlib import Path

from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from .errors import NoExemplar, ParseError, SchemaError
from .model import CaseRecord, Category, ExtractedValue
from .tolerance import to_decimal

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


DEFAULT_COLUMNS = {
    "row_number": "row_number",
    "calculator_id": "calculator_id",
    "calculator_name": "calculator_name",
    "category": "category",
    "patient_note": "patient_note",
    "question": "question",
    "gold_answer": "gold_answer",
    "lower_limit": "lower_limit",
    "upper_limit": "upper_limit",
    "gold_explanation": "gold_explanation",
    "gold_entities": "gold_entities",
    "specialty": "specialty",
}

# Common spellings of the two categories found in source files.
CATEGORY_VALUES = {
    "rule_based": Category.rule_based,
    "rule-based": Category.rule_based,
    "rule": Category.rule_based,
    "equation_based": Category.equation_based,
    "equation-based": Category.equation_based,
    "equation": Category.equation_based,
    "calc": Category.equation_based,
    "calculation": Category.equation_based,
}

REQUIRED_FIELDS = ("row_number", "calculator_id", "category", "question")


def load_column_map(path: str | Path) -> dict[str, str]:
    """Read a column-mapping config (TOML or JSON) into a field->column dict."""
    path = Path(path)
    if path.suffix.lower() == ".toml":
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    else:
        data = json.loads(path.read_text(encoding="utf-8"))
    columns = data.get("columns", data)
    merged = dict(DEFAULT_COLUMNS)
    merged.update({k: str(v) for k, v in columns.items()})
    return merged


def _parse_entities_field(raw: object) -> dict[str, ExtractedValue]:
    if raw is None or raw == "":
        return {}
    if isinstance(raw, str):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError:
            return {}
    if not isinstance(raw, dict):
        return {}
    entities: dict[str, ExtractedValue] = {}
    for name, item in raw.items():
        if isinstance(item, dict):
            unit = item.get("unit")
            entities[str(name)] = ExtractedValue(
                value=str(item.get("value", "")),
                unit=unit if isinstance(unit, str) else None,
            )
        elif isinstance(item, (list, tuple)) and item:
            unit = item[1] if len(item) > 1 and isinstance(item[1], str) else None
            entities[str(name)] = ExtractedValue(value=str(item[0]), unit=unit)
        else:
            entities[str(name)] = ExtractedValue(value="" if item is None else str(item))
    return entities


def _optional_decimal(raw: object) -> Decimal | None:
    if raw is None or raw == "":
        return None
    try:
        return to_decimal(raw)  # type: ignore[arg-type]
    except ParseError:
        return None


def _build_record(row: dict, columns: dict[str, str], row_index: int) -> CaseRecord:
    def cell(field: str) -> object:
        return row.get(columns[field])

    for field in REQUIRED_FIELDS:
        if cell(field) in (None, ""):
            raise SchemaError(
                f"row {row_index}: missing required column {columns[field]!r}",
                row=row_index,
                column=columns[field],
            )

    raw_category = str(cell("category")).strip().lower()
    category = CATEGORY_VALUES.get(raw_category)
    if category is None:
        raise SchemaError(
            f"row {row_index}: unknown category {cell('category')!r}",
            row=row_index,
            column=columns["category"],
        )

    try:
        row_number = int(str(cell("row_number")))
        calculator_id = int(str(cell("calculator_id")))
    except ValueError as exc:
        raise SchemaError(
            f"row {row_index}: non-integer id: {exc}",
            row=row_index,
            column=columns["row_number"],
        ) from exc

    lower = _optional_decimal(cell("lower_limit"))
    upper = _optional_decimal(cell("upper_limit"))
    swapped = False
    if lower is not None and upper is not None and lower > upper:
        lower, upper = upper, lower
        swapped = True

    gold_answer = "" if cell("gold_answer") is None else str(cell("gold_answer"))
    try:
        return CaseRecord(
            row_number=row_number,
            calculator_id=calculator_id,
            calculator_name=str(cell("calculator_name") or ""),
            category=category,
            patient_note=str(cell("patient_note") or ""),
            question=str(cell("question") or ""),
            gold_answer=gold_answer,
            gold_numeric=_optional_decimal(gold_answer),
            lower_limit=lower,
            upper_limit=upper,
            gold_explanation=str(cell("gold_explanation") or ""),
            gold_entities=_parse_entities_field(cell("gold_entities")),
            specialty=str(cell("specialty")) if cell("specialty") else None,
            limits_swapped=swapped,
        )
    except ValidationError as exc:
        raise SchemaError(f"row {row_index}: {exc}", row=row_index) from exc


def load_cases(
    path: str | Path,
    fmt: str | None = None,
    column_map: dict[str, str] | None = None,
) -> list[CaseRecord]:
    """Load benchmark cases from a jsonl or csv file.

    ``fmt`` defaults to the file suffix; ``column_map`` overrides the
    default column names (see ``load_column_map``).
    """
    path = Path(path)
    columns = column_map or DEFAULT_COLUMNS
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if fmt not in ("jsonl", "csv"):
        raise ValueError(f"unsupported format {fmt!r}")

    records: list[CaseRecord] = []
    with path.open("r", encoding="utf-8", newline="") as handle:
        if fmt == "csv":
            for index, row in enumerate(csv.DictReader(handle), start=1):
                records.append(_build_record(row, columns, index))
        else:
            for index, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaError(
                        f"row {index}: invalid JSON: {exc}", row=index
                    ) from exc
                records.append(_build_record(row, columns, index))
    return records


# --- cleaning ----------------------------------------------------------------


class CleaningReason(str, Enum):
    calc13_formula_mistyped = "calc13_formula_mistyped"
    calc28_scoring_rule = "calc28_scoring_rule"
    row451_wrong_gold = "row451_wrong_gold"
    negative_limits_swapped = "negative_limits_swapped"
    calc11_unit_mismatch = "calc11_unit_mismatch"
    calc36_gender_scoring = "calc36_gender_scoring"


@dataclass(frozen=True)
class CleaningRule:
    """One removal directive: a selector plus its reason tag."""

    selector: str
    calculator_id: int | None
    row_number: int | None
    reason: CleaningReason
    note: str = ""

    def matches(self, case: CaseRecord) -> bool:
        if self.calculator_id is not None and case.calculator_id != self.calculator_id:
            return False
        if self.row_number is not None and case.row_number != self.row_number:
            return False
        return True


class RemovedRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    row_number: int
    reason: CleaningReason
    note: str = ""


class CleaningReport(BaseModel):
    """Outcome of one cleaning pass: partition of the input rows."""

    model_config = ConfigDict(frozen=True)

    retained: list[int]
    removed: list[RemovedRow]
    notes: list[str] = []
    unmatched_selectors: list[str] = []

    @model_validator(mode="after")
    def _check_partition(self) -> "CleaningReport":
        removed_rows = {r.row_number for r in self.removed}
        if removed_rows & set(self.retained):
            raise ValueError("retained and removed rows overlap")
        return self


def parse_cleaning_rules(text: str) -> tuple[list[CleaningRule], list[str]]:
    """Parse the rules file: one selector + reason tag per line.

    Selectors: a bare row number, ``calc:<id>``, or ``calc:<id>:row:<n>``.
    Lines starting with ``#`` are comments; ``note:`` lines become report
    notes.
    """
    rules: list[CleaningRule] = []
    notes: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("note:"):
            notes.append(line[len("note:"):].strip())
            continue
        parts = line.split(None, 2)
        if len(parts) < 2:
            raise ValueError(f"line {lineno}: expected '<selector> <reason> [note]'")
        selector, reason_tag = parts[0], parts[1]
        note = parts[2] if len(parts) > 2 else ""
        try:
            reason = CleaningReason(reason_tag)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: unknown reason {reason_tag!r}") from exc

        calc_id: int | None = None
        row_number: int | None = None
        if selector.startswith("calc:"):
            fields = selector.split(":")
            if len(fields) == 2:
                calc_id = int(fields[1])
            elif len(fields) == 4 and fields[2] == "row":
                calc_id = int(fields[1])
                row_number = int(fields[3])
            else:
                raise ValueError(f"line {lineno}: bad selector {selector!r}")
        else:
            row_number = int(selector)
        rules.append(
            CleaningRule(
                selector=selector,
                calculator_id=calc_id,
                row_number=row_number,
                reason=reason,
                note=note,
            )
        )
    return rules, notes


def default_cleaning_rules() -> tuple[list[CleaningRule], list[str]]:
    """The shipped removal list (versioned package data)."""
    text = (
        resources.files("clincalc.data").joinpath("cleaning_rules.txt").read_text("utf-8")
    )
    return parse_cleaning_rules(text)


def apply_cleaning(
    cases: list[CaseRecord],
    rules: list[CleaningRule] | None = None,
    notes: list[str] | None = None,
) -> tuple[list[CaseRecord], CleaningReport]:
    """Partition cases into retained and removed per the removal rules.

    Rules that match no case are no-ops, reported as unmatched selectors;
    cleaning an already-cleaned set therefore removes nothing.
    """
    if rules is None:
        rules, notes = default_cleaning_rules()
    retained: list[CaseRecord] = []
    removed: list[RemovedRow] = []
    matched: set[str] = set()
    for case in cases:
        rule = next((r for r in rules if r.matches(case)), None)
        if rule is None:
            retained.append(case)
        else:
            matched.add(rule.selector)
            removed.append(
                RemovedRow(row_number=case.row_number, reason=rule.reason, note=rule.note)
            )
    report = CleaningReport(
        retained=[c.row_number for c in retained],
        removed=removed,
        notes=list(notes or []),
        unmatched_selectors=[r.selector for r in rules if r.selector not in matched],
    )
    return retained, report


def select_oneshot_example(case: CaseRecord, pool: list[CaseRecord]) -> CaseRecord:
    """Deterministic worked-example choice: the lowest-numbered other case
    built on the same calculator."""
    candidates = [
        c
        for c in pool
        if c.calculator_id == case.calculator_id and c.row_number != case.row_number
    ]
    if not candidates:
        raise NoExemplar(
            f"no other case uses calculator {case.calculator_id} "
            f"(query row {case.row_number})"
        )
    return min(candidates, key=lambda c: c.row_number)
