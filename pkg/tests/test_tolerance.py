"""Numeric matching: worked vectors, the independent decimal oracle, and
monotonicity/symmetry properties."""

import random
from decimal import ROUND_HALF_UP, Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from clincalc.errors import ParseError
from clincalc.tolerance import (
    ToleranceSpec,
    decimal_places,
    pct_match,
    range_match,
    strict_match,
)


def oracle_strict(pred_text: str, truth_text: str) -> bool:
    """Independent re-implementation in exact decimal arithmetic, no epsilon.

    Decimal places are counted with plain string surgery, rounding uses
    Decimal quantization directly.
    """
    mantissa = pred_text.strip().replace(",", "").lower().split("e")[0]
    places = len(mantissa.split(".", 1)[1]) if "." in mantissa else 0
    r = min(places, 2)
    quantum = Decimal((0, (1,), -r))
    tolerance = Decimal((0, (5,), -r - 1))  # 0.5 * 10^-r
    pred = Decimal(pred_text.replace(",", "")).quantize(quantum, rounding=ROUND_HALF_UP)
    truth = Decimal(truth_text).quantize(quantum, rounding=ROUND_HALF_UP)
    return abs(pred - truth) <= tolerance


class TestDecimalPlaces:
    def test_two_places(self):
        assert decimal_places("10.65") == 2

    def test_four_places(self):
        assert decimal_places("10.6512") == 4

    def test_integer(self):
        assert decimal_places("7") == 0

    def test_trailing_zeros_count(self):
        assert decimal_places("10.650") == 3

    def test_thousands_separator(self):
        assert decimal_places("1,234.56") == 2

    def test_junk_raises(self):
        with pytest.raises(ParseError):
            decimal_places("not a number")


class TestToleranceSpec:
    @pytest.mark.parametrize(
        "stated,places,tolerance",
        [
            (0, 0, Decimal("0.5")),
            (1, 1, Decimal("0.05")),
            (2, 2, Decimal("0.005")),
            (4, 2, Decimal("0.005")),
        ],
    )
    def test_capping(self, stated, places, tolerance):
        spec = ToleranceSpec.for_places(stated)
        assert spec.effective_places == places
        assert spec.tolerance == tolerance


class TestStrictMatch:
    def test_sodium_case_mismatch(self):
        # Hallucinated-coefficient answer vs the true corrected sodium:
        # |135.43 - 137.25| = 1.82 > 0.005 at two places.
        ok, spec = strict_match("135.432", Decimal("137.248"))
        assert ok is False
        assert spec.tolerance == Decimal("0.005")

    def test_sodium_case_match(self):
        ok, spec = strict_match("137.25", Decimal("137.248"))
        assert ok is True
        assert spec.tolerance == Decimal("0.005")

    def test_worked_tolerance_table(self):
        assert strict_match("10.65", Decimal("10.65"))[1].tolerance == Decimal("0.005")
        assert strict_match("10.7", Decimal("10.65"))[1].tolerance == Decimal("0.05")
        spec = strict_match("10.6512", Decimal("10.65"))[1]
        assert spec.effective_places == 2
        assert spec.tolerance == Decimal("0.005")

    def test_integer_tolerance(self):
        assert strict_match("7", Decimal("7.4"))[0] is True
        assert strict_match("7", Decimal("7.6"))[0] is False

    def test_float_truth_accepted(self):
        assert strict_match("137.25", 137.248)[0] is True

    def test_oracle_agreement_random_grid(self):
        # 200 (truth, jitter) pairs at each precision, implementation vs the
        # exact-decimal oracle: they must agree on every single pair.
        rng = random.Random(20240917)
        for r in (0, 1, 2):
            for _ in range(200):
                truth = Decimal(rng.randrange(-200_000, 200_000)) / 1000
                tol = Decimal((0, (5,), -r - 1))
                jitter = Decimal(rng.randrange(-4_000, 4_000)) * tol / 1000
                pred_value = (truth + jitter).quantize(
                    Decimal((0, (1,), -r)), rounding=ROUND_HALF_UP
                )
                pred_text = f"{pred_value:.{r}f}"
                got, spec = strict_match(pred_text, truth)
                assert spec.effective_places == r
                assert got == oracle_strict(pred_text, str(truth)), (
                    pred_text,
                    truth,
                    r,
                )

    def test_symmetry_after_rendering(self):
        # Once both sides are rendered at r places, swapping them cannot
        # change the verdict.
        rng = random.Random(7)
        for _ in range(200):
            r = rng.choice([0, 1, 2])
            quantum = Decimal((0, (1,), -r))
            a = (Decimal(rng.randrange(-9_000, 9_000)) / 100).quantize(quantum)
            b = (Decimal(rng.randrange(-9_000, 9_000)) / 100).quantize(quantum)
            assert strict_match(f"{a:.{r}f}", b)[0] == strict_match(f"{b:.{r}f}", a)[0]

    def test_tightening_monotonicity(self):
        # If a pair fails at one decimal place it also fails when the same
        # rounded pair is checked at two places.
        rng = random.Random(99)
        for _ in range(300):
            truth = Decimal(rng.randrange(-100_000, 100_000)) / 1000
            pred = truth + Decimal(rng.randrange(-300, 300)) / 1000
            pred_1dp = pred.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
            if not strict_match(f"{pred_1dp:.1f}", truth)[0]:
                assert not strict_match(f"{pred_1dp:.2f}", truth)[0]


class TestRangeMatch:
    def test_sodium_range(self):
        assert range_match(Decimal("135.432"), Decimal("130.39"), Decimal("144.11"))

    def test_inclusive_boundary(self):
        assert range_match(Decimal("130.39"), Decimal("130.39"), Decimal("144.11"))

    def test_reversed_negative_bounds(self):
        assert range_match(Decimal("-4.5"), Decimal("-4"), Decimal("-5"))

    @given(
        st.decimals(allow_nan=False, allow_infinity=False, places=3),
        st.decimals(allow_nan=False, allow_infinity=False, places=3),
        st.decimals(allow_nan=False, allow_infinity=False, places=3),
    )
    def test_bound_order_irrelevant(self, x, a, b):
        assert range_match(x, a, b) == range_match(x, b, a)


class TestPctMatch:
    def test_within_five_percent(self):
        assert pct_match(Decimal("62.0"), Decimal("60.0")) is True

    def test_outside_five_percent(self):
        assert pct_match(Decimal("63.1"), Decimal("60.0")) is False

    def test_zero_truth(self):
        assert pct_match(Decimal("0"), Decimal("0")) is True
        assert pct_match(Decimal("0.01"), Decimal("0")) is False

    def test_pct_must_be_positive(self):
        with pytest.raises(ValueError):
            pct_match(Decimal("1"), Decimal("1"), pct=0)
