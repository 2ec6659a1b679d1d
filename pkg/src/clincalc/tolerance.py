"""Numeric matching policies for graded answers.

Three rules coexist and are deliberately kept in one module so no other
code ever compares numbers directly:

* ``strict_match`` — the precision-dependent rule: the allowed error is
  half a unit in the last place of the prediction as written, capped at
  two decimal places (so 0.5, 0.05, or 0.005).
* ``range_match`` — the dataset's inclusive lower/upper-limit rule.
* ``pct_match`` — the legacy relative-tolerance rule (default 5%).

Both prediction and truth are rounded to the effective precision before
differencing, and all arithmetic is exact decimal; a tiny epsilon exists
only to absorb binary-float artifacts in inputs that arrived as floats.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation, ROUND_HALF_UP

from .errors import ParseError

_DECIMAL_LITERAL = re.compile(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?$")

# Guards float-sourced inputs only; decimal-string inputs are exact.
_FLOAT_EPS = Decimal("1e-9")

Numeric = Decimal | int | float | str


@dataclass(frozen=True)
class ToleranceSpec:
    """Allowed absolute error for a prediction rendered at a given precision.

    ``effective_places`` is the prediction's stated decimal places capped at
    two; ``tolerance`` is half a unit in that place: 0.5, 0.05, or 0.005.
    """

    effective_places: int
    tolerance: Decimal

    @classmethod
    def for_places(cls, stated_places: int) -> "ToleranceSpec":
        places = min(stated_places, 2)
        return cls(effective_places=places, tolerance=Decimal("0.5").scaleb(-places))


def to_decimal(value: Numeric) -> Decimal:
    """Convert a numeric input to Decimal, raising ParseError on junk text.

    Floats go through ``str`` so a value like 137.248 stays 137.248 rather
    than its binary expansion.
    """
    if isinstance(value, Decimal):
        return value
    if isinstance(value, (int, float)):
        return Decimal(str(value))
    text = value.strip().replace(",", "")
    if not _DECIMAL_LITERAL.match(text):
        raise ParseError(f"not a decimal literal: {value!r}")
    try:
        return Decimal(text)
    except InvalidOperation as exc:  # pragma: no cover - regex should prevent this
        raise ParseError(f"not a decimal literal: {value!r}") from exc


def decimal_places(value_text: str) -> int:
    """Count digits after the decimal point in the literal as written.

    Trailing zeros count ("10.650" has 3); integers have 0. Thousands
    separators are ignored. Raises ParseError for non-numeric text.
    """
    text = value_text.strip().replace(",", "")
    if not _DECIMAL_LITERAL.match(text):
        raise ParseError(f"not a decimal literal: {value_text!r}")
    mantissa = text.lower().split("e", 1)[0]
    if "." not in mantissa:
        return 0
    return len(mantissa.split(".", 1)[1])


def _quantize(value: Decimal, places: int) -> Decimal:
    return value.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


def strict_match(pred_text: str, truth: Numeric) -> tuple[bool, ToleranceSpec]:
    """Precision-dependent comparison of a predicted literal against truth.

    The effective precision r is min(decimal places of ``pred_text``, 2).
    Both sides are rounded (half-up) to r places and the match requires
    |pred - truth| <= 0.5 * 10^-r, with a 1e-9 epsilon for float inputs.
    """
    spec = ToleranceSpec.for_places(decimal_places(pred_text))
    pred = _quantize(to_decimal(pred_text), spec.effective_places)
    gold = _quantize(to_decimal(truth), spec.effective_places)
    return abs(pred - gold) <= spec.tolerance + _FLOAT_EPS, spec


def range_match(pred: Numeric, lower: Numeric, upper: Numeric) -> bool:
    """Inclusive range check; bounds are normalized to (min, max) first."""
    value = to_decimal(pred)
    a, b = to_decimal(lower), to_decimal(upper)
    if a > b:
        a, b = b, a
    return a <= value <= b


def pct_match(pred: Numeric, truth: Numeric, pct: Numeric = 5) -> bool:
    """Relative-tolerance check: |pred - truth| <= pct% of |truth|.

    A truth of exactly zero matches only a prediction of exactly zero.
    """
    ratio = to_decimal(pct)
    if ratio <= 0:
        raise ValueError("pct must be positive")
    value, gold = to_decimal(pred), to_decimal(truth)
    if gold == 0:
        return value == 0
    return abs(value - gold) <= ratio / 100 * abs(gold)
