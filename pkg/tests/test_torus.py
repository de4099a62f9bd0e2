"""
Tests for torus points, closures of powers and coset recovery.
"""

import ast
import inspect
import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from orbitbox import torus as torus_module
from orbitbox.base import EmptySampleError, PreconditionError
from orbitbox.operators import OperatorModel, Rotation2D
from orbitbox.orbit import finite_power_experiment, orbit, sphere_net
from orbitbox.torus import (
    ApproxAngle,
    TorusPoint,
    brute_force_powers,
    closure_of_powers,
    continued_fraction_convergents,
    estimate_cosets,
    is_generator,
    power_coverage,
)

GOLDEN = (math.sqrt(5) - 1) / 2
SQRT2_MINUS_1 = math.sqrt(2) - 1


class TestTorusPoint:
    """Arithmetic on T^k in turns."""

    def test_exact_coordinates_reduce_mod_one(self):
        """Test that exact angles live in [0, 1)."""
        assert TorusPoint.exact("5/3").coords == (Fraction(2, 3),)
        assert TorusPoint.exact("1/3") * 3 == TorusPoint.identity()

    def test_axis_phases_are_exact(self):
        """Test that phases of real and imaginary numbers are exact."""
        assert TorusPoint.from_complex(-2.0) == TorusPoint.exact("1/2")
        assert TorusPoint.from_complex(3j) == TorusPoint.exact("1/4")
        assert TorusPoint.from_complex(-1j) == TorusPoint.exact("3/4")
        assert not TorusPoint.from_complex(1 + 1j).is_exact

    def test_zero_has_no_phase(self):
        """Test that z = 0 is refused."""
        with pytest.raises(PreconditionError):
            TorusPoint.from_complex(0)

    def test_distance_wraps(self):
        """Test that 0.95 and 0.05 are a tenth of a turn apart."""
        a, b = TorusPoint.approx(0.95), TorusPoint.approx(0.05)
        assert a.distance(b) == pytest.approx(0.1)

    def test_dict_round_trip_keeps_exactness(self):
        """Test that exact and approximate angles survive to_dict."""
        p = TorusPoint((Fraction(3, 7), ApproxAngle(0.25, 1e-9)))
        assert TorusPoint.from_dict(p.to_dict()) == p


class TestConvergents:
    """Continued fraction convergents."""

    def test_pi_like_value(self):
        """Test the classical convergents of 355/113."""
        c = continued_fraction_convergents(Fraction(355, 113), 1000)
        assert Fraction(22, 7) in c
        assert c[-1] == Fraction(355, 113)

    def test_denominator_bound(self):
        """Test that no convergent exceeds Q."""
        c = continued_fraction_convergents(GOLDEN, 100)
        assert all(f.denominator <= 100 for f in c)
        assert c[-1] == Fraction(55, 89)


class TestClosure:
    """Closed subgroups generated by one point."""

    def test_rational_examples(self):
        """Test the orders of 1/3 and (1/2, 1/4)."""
        assert closure_of_powers(TorusPoint.exact("1/3")).order == 3
        assert closure_of_powers(TorusPoint.exact("1/2", "1/4")).order == 4
        assert closure_of_powers(TorusPoint.identity(2)).order == 1

    def test_matches_brute_force(self, rng):
        """Test that exact closures agree with enumeration."""
        for _ in range(40):
            k = int(rng.integers(1, 4))
            dens = rng.integers(1, 13, size=k)
            z = TorusPoint.exact(
                *[Fraction(int(rng.integers(0, d)), int(d)) for d in dens]
            )
            desc = closure_of_powers(z)
            brute = brute_force_powers(z)
            assert desc.order == len(brute)
            assert set(desc.elements()) == set(brute)
            assert all(desc.contains(p) for p in brute)

    def test_golden_rotation_generates(self):
        """Test that the golden angle is a generator up to Q."""
        v = is_generator(TorusPoint.approx(GOLDEN))
        assert v.generator
        assert v.certainty == "up_to_Q"

    def test_float_quarter_is_finite(self):
        """Test that an exactly representable 1/4 is found rational."""
        desc = closure_of_powers(TorusPoint.approx(0.25))
        assert desc.finite and desc.order == 4
        assert desc.certainty == "up_to_Q=1000000"

    def test_exact_input_is_exact(self):
        """Test that rational input gives an exact verdict."""
        v = is_generator(TorusPoint.exact("2/5"))
        assert not v.generator
        assert v.order == 5 and v.certainty == "exact"

    def test_dependent_pair(self):
        """Test that (t, 2t) spans a one-dimensional closure."""
        z = TorusPoint.approx(SQRT2_MINUS_1, 2 * SQRT2_MINUS_1)
        desc = closure_of_powers(z)
        assert not desc.finite
        assert desc.relations == ((2, -1),)
        assert desc.identity_dim == 1
        assert desc.contains(z * 17)

    def test_k_must_be_one_for_generators(self):
        """Test that is_generator is defined on the circle only."""
        with pytest.raises(PreconditionError):
            is_generator(TorusPoint.exact("1/2", "1/3"))


class TestPowerCoverage:
    """Equidistribution of irrational rotations."""

    def test_irrational_covers(self):
        """Test that sqrt(2) - 1 covers a fine net of the circle."""
        z = TorusPoint.approx(SQRT2_MINUS_1)
        cov = power_coverage(z, 20000, 500, 1e-3, seed=3)
        assert cov.fraction == 1.0

    def test_rational_covers_little(self):
        """Test that a quarter turn visits four points only."""
        cov = power_coverage(TorusPoint.exact("1/4"), 1000, 500, 1e-3, 3)
        assert cov.fraction < 0.05


class TestCosets:
    """Sets F_{x,y} from coupled orbits."""

    def test_dense_rotation_gives_whole_group(self):
        """Test that an irrational rotation meets every coset."""
        x = np.array([1.0, 0.0])
        rep = finite_power_experiment(
            Rotation2D(GOLDEN), x, 3, 1500, sphere_net(2, 30, 0), 0.15
        )
        assert rep.cosets.consistent
        assert len(rep.cosets.subgroup) == 3
        assert rep.power_fraction == 1.0

    def test_matched_rotation_gives_singletons(self):
        """Test that T of order q coupled with 1/q pins each point."""
        x = np.array([1.0, 0.0])
        net = np.array([p.vector() for p in orbit(Rotation2D(1 / 3), x, 2)])
        rep = finite_power_experiment(Rotation2D(1 / 3), x, 3, 9, net, 0.1)
        assert rep.cosets.subgroup == frozenset({TorusPoint.identity()})
        assert [len(s) for s in rep.cosets.sets.values()] == [1, 1, 1]
        assert rep.cosets.consistent

    @pytest.mark.parametrize("q", range(1, 13))
    def test_recovers_synthesized_subgroups(self, q):
        """Test that every subgroup of Z_q and its cosets come back."""
        angles = 2 * np.pi * np.arange(5) / 5
        net = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        group = closure_of_powers(TorusPoint.exact(Fraction(1, q)))
        for d in (d for d in range(1, q + 1) if q % d == 0):
            h0 = frozenset(
                TorusPoint.exact(Fraction(j * (q // d), q)) for j in range(d)
            )
            shifts = [TorusPoint.exact(Fraction(i, q)) for i in range(5)]
            samples = [
                (net[i], c + h) for i, c in enumerate(shifts) for h in h0
            ]
            est = estimate_cosets(samples, net[0], net, 0.1, group)
            assert est.subgroup == h0
            assert est.subgroup_closed and est.consistent
            for i, c in enumerate(shifts):
                assert est.sets[i] == frozenset(c + h for h in h0)

    def test_needs_samples(self):
        """Test that an empty sample list is refused."""
        g = closure_of_powers(TorusPoint.exact("1/3"))
        with pytest.raises(EmptySampleError):
            estimate_cosets([], np.ones(2), np.eye(2), 0.1, g)

    def test_needs_finite_group(self):
        """Test that infinite closures are refused."""
        g = closure_of_powers(TorusPoint.approx(GOLDEN))
        sample = [(np.ones(2), TorusPoint.identity())]
        with pytest.raises(PreconditionError):
            estimate_cosets(sample, np.ones(2), np.eye(2), 0.1, g)


class TestLayering:
    """Torus arithmetic stays below the orbit layer."""

    def test_torus_imports_base_only(self):
        """Test that no import in the torus module reaches orbit code."""
        tree = ast.parse(Path(torus_module.__file__).read_text())
        modules = {
            node.module
            for node in ast.walk(tree)
            if isinstance(node, ast.ImportFrom) and node.module
        } | {
            alias.name
            for node in ast.walk(tree)
            if isinstance(node, ast.Import)
            for alias in node.names
        }
        local = {m for m in modules if m.startswith("orbitbox")}
        assert local == {"orbitbox.base"}

    def test_finite_power_experiment_takes_a_model(self):
        """Test that the experiment is typed on operator models."""
        params = inspect.signature(finite_power_experiment).parameters
        assert params["model"].annotation is OperatorModel
