"""
Tests for the log-domain binomial sums A_n and B_n.
"""

import math
from decimal import Context, Decimal, localcontext

import pytest

from orbitbox.asymptotics import (
    LogValue,
    a_n,
    b_n,
    divergence_report,
    log_binomial,
    normalized_exponent,
    sn_coordinate,
    split_sums,
    stirling_band_check,
    stirling_band_sweep,
    tail_threshold,
)
from orbitbox.base import PreconditionError

CTX = Context(prec=200, Emin=-(10**9), Emax=10**9)


def _decimal_sum(n: int, term) -> Decimal:
    with localcontext(CTX):
        return sum((term(k) for k in range(n + 1)), start=Decimal(0))


def _ln_sum(n: int, term) -> float:
    return float(_decimal_sum(n, term).ln(CTX))


def _oracle_a(n: int) -> float:
    return _ln_sum(
        n,
        lambda k: CTX.divide(
            Decimal(math.comb(n, k)) * Decimal(-k * (k + 1)).exp(CTX),
            Decimal(k + 1),
        ),
    )


def _oracle_b(n: int) -> float:
    return _ln_sum(
        n,
        lambda k: Decimal(math.comb(n, k))
        * Decimal(-(k + 1) * (k + 2)).exp(CTX),
    )


class TestLogValue:
    """Signed numbers stored as logarithms."""

    def test_mixed_signs(self):
        """Test that 3 + (-5) = -2."""
        v = LogValue.from_float(3.0) + LogValue.from_float(-5.0)
        assert v.sign == -1
        assert v.to_float() == pytest.approx(-2.0)

    def test_cancellation_gives_zero(self):
        """Test that x - x is the canonical zero."""
        x = LogValue.from_float(1e300) * LogValue.from_float(1e300)
        assert x - x == LogValue.zero()

    def test_huge_values_do_not_overflow(self):
        """Test that products far past float range stay finite in logs."""
        x = LogValue(1, 5000.0) * LogValue(1, 5000.0)
        assert x.log == 10000.0
        assert x.to_float() == math.inf

    def test_ordering(self):
        """Test that negative < zero < positive and logs order within."""
        values = [
            LogValue(1, 3.0),
            LogValue(-1, 1.0),
            LogValue.zero(),
            LogValue(1, -2.0),
            LogValue(-1, 4.0),
        ]
        assert [v.to_float() for v in sorted(values)] == sorted(
            v.to_float() for v in values
        )

    def test_signed_sum(self):
        """Test log-sum-exp with both signs."""
        v = LogValue.sum([1, -1, 1], [math.log(5), math.log(2), 0.0])
        assert v.to_float() == pytest.approx(4.0)


class TestLogBinomial:
    """ln C(n, k) in each of its regimes."""

    @pytest.mark.parametrize(
        "n, k",
        [(60, 30), (1000, 500), (100_000, 3000), (1_000_000, 500)],
    )
    def test_against_exact_integers(self, n, k):
        """Test agreement with math.comb."""
        exact = math.log(math.comb(n, k))
        assert log_binomial(n, k) == pytest.approx(exact, rel=1e-10)

    def test_out_of_range(self):
        """Test that k > n is refused."""
        with pytest.raises(PreconditionError):
            log_binomial(3, 4)


class TestSums:
    """A_n, B_n and the coordinates of S^n y."""

    def test_initial_values(self):
        """Test A_0 = 1, B_0 = e^-2 and A_1 = 1 + e^-2 / 2."""
        assert a_n(0).to_float() == 1.0
        assert b_n(0).log == -2.0
        assert a_n(1).to_float() == pytest.approx(1 + math.exp(-2) / 2)

    @pytest.mark.parametrize("n", [10, 100, 1000, 5000])
    def test_against_decimal_oracle(self, n):
        """Test ln A_n and ln B_n against 200-digit decimal sums."""
        assert a_n(n).log == pytest.approx(_oracle_a(n), rel=1e-12)
        assert b_n(n).log == pytest.approx(_oracle_b(n), rel=1e-12)

    def test_a_n_increasing(self):
        """Test that A_n grows with n."""
        logs = [a_n(n).log for n in range(300)]
        assert all(a < b for a, b in zip(logs, logs[1:]))

    def test_ratio_below_e_minus_two_and_decreasing(self):
        """Test that B_n / A_n starts at e^-2 and falls."""
        ratios = [math.exp(b_n(n).log - a_n(n).log) for n in range(200)]
        assert ratios[0] == pytest.approx(math.exp(-2))
        assert all(r < math.exp(-2) for r in ratios[1:])
        assert all(a > b for a, b in zip(ratios, ratios[1:]))

    def test_unit_coordinate(self):
        """Test (S^n 1)_0 = sum C(n,k) exp(-k(k+1))."""
        n = 20
        expected = _ln_sum(
            n,
            lambda k: Decimal(math.comb(n, k))
            * Decimal(-k * (k + 1)).exp(CTX),
        )
        assert sn_coordinate("unit", 0, n).log == pytest.approx(expected)

    def test_finite_signed_sequence(self):
        """Test that finitely supported y may carry signs."""
        v = sn_coordinate([1.0, -1.0], 0, 3)
        assert v.to_float() == pytest.approx(1 - 3 * math.exp(-2))

    def test_alternating_cancellation(self):
        """Test that y_k = (-1)^k at n = 100 matches a decimal sum."""
        n = 100
        expected = _decimal_sum(
            n,
            lambda k: (-1) ** k
            * Decimal(math.comb(n, k))
            * Decimal(-k * (k + 1)).exp(CTX),
        )
        v = sn_coordinate("alternating", 0, n)
        assert v.sign == -1
        assert v.to_float() == pytest.approx(float(expected), rel=1e-8)
        assert v.to_float() == pytest.approx(-1.2491489840197185, rel=1e-8)

    def test_shifted_coordinate(self):
        """Test that coordinate j picks up exp(-2jk)."""
        v = sn_coordinate("unit", 2, 1)
        assert v.to_float() == pytest.approx(1 + math.exp(-2 - 4))

    @pytest.mark.parametrize("j", [0, 1, 2, 5])
    def test_coordinate_matches_weight_products(self, j):
        """Test that term k carries w_{j+1} ... w_{j+k}, w_i = e^{-2i}."""
        n = 6
        expected = sum(
            math.comb(n, k)
            * math.prod(math.exp(-2 * i) for i in range(j + 1, j + k + 1))
            / (j + k + 1)
            for k in range(n + 1)
        )
        v = sn_coordinate("reciprocal", j, n)
        assert v.to_float() == pytest.approx(expected, rel=1e-12)

    def test_unknown_rule(self):
        """Test that unknown sequence names are refused."""
        with pytest.raises(PreconditionError):
            sn_coordinate("harmonic", 0, 3)


class TestGrowth:
    """Growth of ln A_n and the Stirling band."""

    def test_normalized_exponent_below_quarter(self):
        """Test that ln A_n / (ln n)^2 rises towards but stays below 1/4."""
        values = [normalized_exponent(10**e) for e in range(1, 6)]
        assert all(a < b for a, b in zip(values, values[1:]))
        assert values[-1] < 0.25

    def test_normalized_exponent_domain(self):
        """Test that n < 2 is refused."""
        with pytest.raises(PreconditionError):
            normalized_exponent(1)

    def test_stirling_band(self):
        """Test that the band is positive and drifts little."""
        alpha, beta = stirling_band_check(10_000)
        assert 0 < alpha <= beta
        band = stirling_band_sweep([1000, 10_000, 100_000])
        assert band.drift <= 2.0

    def test_stirling_band_domain(self):
        """Test that tiny n is refused."""
        with pytest.raises(PreconditionError):
            stirling_band_check(3)

    def test_tail_threshold_is_minimal(self):
        """Test that k is the first index meeting the tail bound."""
        for n in (10, 1000, 10**6):
            t = tail_threshold(n)
            target = math.log(4.0 * math.log(n)) - 2.0 * math.log(n)

            def lhs(k):
                return math.log(k + 1) - 2.0 * k - 2.0

            assert lhs(t.k) <= target + 1e-12
            assert t.k == 0 or lhs(t.k - 1) > target - 1e-12

    def test_split_sums(self):
        """Test that the heads are part of A_n."""
        s = split_sums(10**5)
        assert s.cut == math.ceil(math.log(10**5) / 4)
        assert s.a_head.log <= s.a_total.log
        assert s.b_head.log < s.a_head.log


class TestDivergence:
    """Lower bounds A_n - 2c B_n."""

    def test_zero_sequence(self):
        """Test that c = 0 leaves A_n, positive from the start."""
        report = divergence_report([], [1, 10, 100])
        assert report.c == 0.0
        assert report.onset == 1
        assert [r.bound for r in report.rows] == [r.a for r in report.rows]

    def test_large_c_delays_onset(self):
        """Test that a large c makes the early bounds negative."""
        report = divergence_report([10.0], [0, 10, 100, 1000, 10_000])
        assert report.rows[0].bound.sign < 0
        assert report.onset is None or report.onset > 0

    def test_csv(self):
        """Test that the table has one row per grid point."""
        report = divergence_report([0.5], [0, 10, 100])
        lines = report.to_csv().splitlines()
        assert lines[0] == "n,ln_A,ln_B,ratio,normalized_exponent"
        assert len(lines) == 4
        assert lines[1].startswith("0,0.0,-2.0,")
