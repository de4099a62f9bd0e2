"""
Tests for winding numbers of sampled paths.
"""

import numpy as np
import pytest

from orbitbox.base import (
    EndpointMismatchError,
    InsufficientSamplingError,
    MarginViolationError,
    NonMonotoneError,
    PreconditionError,
)
from orbitbox.winding import (
    SampledPath,
    concatenate,
    lemma_map_demo,
    lift,
    omit_point_bound_check,
    random_avoiding_path,
    random_path,
    reparametrize,
    scale,
    winding,
    winding_with_flag,
)


def _loop(turns: float, samples: int = 100) -> SampledPath:
    return SampledPath.from_function(
        lambda s: turns * s, 0.0, 1.0, samples, closed=turns == round(turns)
    )


class TestSampledPath:
    """Construction and validation."""

    def test_times_must_increase(self):
        """Test that repeated sample times are refused."""
        with pytest.raises(NonMonotoneError):
            SampledPath(np.array([0.0, 0.0]), np.array([0.1, 0.2]))

    def test_closed_path_must_close(self):
        """Test that a closed path has matching endpoints mod 1."""
        with pytest.raises(EndpointMismatchError):
            SampledPath(np.array([0.0, 1.0]), np.array([0.0, 0.3]), True)

    def test_half_turn_step_is_ambiguous(self):
        """Test that half-turn steps are reported, not guessed."""
        p = SampledPath(np.array([0.0, 1.0]), np.array([0.0, 0.5]))
        with pytest.raises(InsufficientSamplingError):
            winding(p)

    def test_lift_is_continuous(self):
        """Test that the lift undoes wrapping into [0, 1)."""
        p = SampledPath(np.linspace(0, 1, 4), np.array([0.8, 0.95, 0.1, 0.3]))
        assert lift(p) == pytest.approx([0.8, 0.95, 1.1, 1.3])


class TestWinding:
    """Turn counts and their algebra."""

    def test_closed_loop_snaps(self):
        """Test that a closed loop winds an integer number of times."""
        w, snapped = winding_with_flag(_loop(3))
        assert w == 3.0 and snapped

    def test_open_path_is_not_snapped(self):
        """Test that open paths keep the fractional turn count."""
        w, snapped = winding_with_flag(_loop(1.25))
        assert w == pytest.approx(1.25) and not snapped

    def test_random_closed_paths_are_integral(self, rng):
        """Test that random closed walks wind an integer count."""
        for _ in range(20):
            w, snapped = winding_with_flag(random_path(rng, 64, closed=True))
            assert snapped and w == round(w)

    def test_refinement_keeps_winding(self, rng):
        """Test that inserting midpoints never changes the turn count."""
        for _ in range(200):
            p = random_path(rng, 32, closed=True)
            lifted = lift(p)
            times = np.empty(2 * len(p.times) - 1)
            angles = np.empty_like(times)
            times[::2], angles[::2] = p.times, p.angles
            times[1::2] = (p.times[:-1] + p.times[1:]) / 2
            angles[1::2] = (lifted[:-1] + lifted[1:]) / 2
            refined = SampledPath(times, angles, closed=True)
            assert winding(refined) == winding(p)

    def test_additivity(self, rng):
        """Test that w(p . q) = w(p) + w(q)."""
        for _ in range(50):
            p = random_path(rng, 40)
            q = random_path(rng, 30)
            q = SampledPath(q.times, q.angles - q.start + p.end)
            total = winding(concatenate(p, q))
            assert total == pytest.approx(
                winding(p) + winding(q), abs=1e-12
            )

    def test_concatenate_needs_matching_ends(self):
        """Test that a gap between the paths is refused."""
        with pytest.raises(EndpointMismatchError):
            concatenate(_loop(0.25), _loop(0.25))

    def test_reparametrization_invariance(self):
        """Test that a monotone time change keeps the winding."""
        p = _loop(3)
        t = np.linspace(0.0, 1.0, 400)
        q = reparametrize(p, t, t**2)
        assert winding(q) == pytest.approx(3.0)

    def test_reparametrization_must_be_monotone(self):
        """Test that decreasing time changes are refused."""
        t = np.linspace(0.0, 1.0, 5)
        with pytest.raises(NonMonotoneError):
            reparametrize(_loop(1), t, np.array([0, 0.5, 0.3, 0.8, 1.0]))

    def test_scaling_invariance(self, rng):
        """Test that rotating a path keeps its winding."""
        p = random_path(rng, 50)
        assert winding(scale(0.3, p)) == pytest.approx(winding(p), abs=1e-12)
        assert scale(1j, p).start == pytest.approx(p.start + 0.25)

    def test_scale_must_be_unimodular(self):
        """Test that |u| != 1 is refused."""
        with pytest.raises(PreconditionError):
            scale(complex(2, 0), _loop(1))


class TestOmitPoint:
    """Paths avoiding a point wind less than once."""

    def test_avoiding_paths(self, rng):
        """Test that random walks avoiding z0 satisfy |w| < 1."""
        for z0 in (0.0, 0.3, 0.75):
            p = random_avoiding_path(rng, z0, 200)
            assert omit_point_bound_check(p, z0)

    def test_crossing_is_a_violation(self):
        """Test that a segment passing over z0 is reported."""
        p = SampledPath(np.array([0.0, 1.0]), np.array([0.1, 0.3]))
        with pytest.raises(MarginViolationError):
            omit_point_bound_check(p, 0.2)


class TestLemmaMap:
    """Winding arithmetic along an orbit of T = z."""

    def test_third_of_a_turn(self):
        """Test that the middle section winds m * w(beta)."""
        demo = lemma_map_demo("1/3", 7)
        assert demo.w_beta == pytest.approx(1 / 3)
        assert demo.sum_mid == pytest.approx(7 / 3)
        assert demo.residual < 1e-12
        assert demo.bound_ok

    def test_negative_phase(self):
        """Test that 2/3 turns is read as -1/3."""
        demo = lemma_map_demo("2/3", 7)
        assert demo.sum_mid == pytest.approx(-7 / 3)

    def test_too_few_pieces(self):
        """Test that m |w(beta)| <= 2 is refused."""
        with pytest.raises(PreconditionError):
            lemma_map_demo("1/3", 6)

    def test_fixed_point(self):
        """Test that z = 1 is refused."""
        with pytest.raises(PreconditionError):
            lemma_map_demo(0, 7)
