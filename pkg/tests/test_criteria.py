"""
Tests for the criterion residuals, witness combination, the R+
classification and the S_u identities.
"""

import cmath
import math

import numpy as np
import pytest

from orbitbox.base import (
    EigenpairResidualError,
    EmptyTailError,
    PreconditionError,
    WitnessMismatchError,
)
from orbitbox.criteria import (
    CriterionWitness,
    Provenance,
    RPlusKind,
    SpectrumDescriptor,
    SpectrumKind,
    classify_rplus,
    combine_witnesses,
    pn_apply,
    ray_obstruction_check,
    scaled_shift_witness,
    slice_map_check,
    spectrum_of_adjoint,
    su_orbit_identity_check,
    su_similarity_check,
    su_similarity_obstruction,
    telescoping_check,
    verify_criterion,
)
from orbitbox.operators import (
    DenseMatrix,
    DirectSum,
    ExtensionSu,
    Identity,
    VolterraQuadrature,
    WeightedBackwardShift,
    basis_vector,
    salas_operator,
)
from orbitbox.torus import TorusPoint

GOLDEN = (math.sqrt(5) - 1) / 2
DIM = 64
INDICES = range(30, 41)


@pytest.fixture
def tests_vectors():
    return [basis_vector(DIM, j) for j in range(4)]


def _shift(factor, tests, scalars=None):
    scalars = scalars or [1.0] * len(INDICES)
    return scaled_shift_witness(
        factor, DIM, INDICES, scalars, tests, tests
    )


class TestVerifyCriterion:
    """Residual curves along n_k."""

    def test_balanced_shift_passes(self, tests_vectors):
        """Test that 2B with S_k = (F/2)^n_k satisfies the criterion."""
        model, wit = _shift(2.0, tests_vectors)
        report = verify_criterion(model, wit)
        assert report.passed
        assert all(r == 0.0 for r in report.r1)
        assert all(r == 0.0 for r in report.r2)
        assert max(report.r3) <= 2.0**-30

    def test_unbalanced_scalars_fail(self, tests_vectors):
        """Test that huge s_k make s_k |T^n x| blow up."""
        model, _ = _shift(2.0, tests_vectors)
        _, heavy = scaled_shift_witness(
            2.0,
            DIM,
            INDICES,
            [4.0**n for n in INDICES],
            [basis_vector(DIM, DIM - 1)],
            tests_vectors,
        )
        assert not verify_criterion(model, heavy).passed

    def test_identity_fails(self, tests_vectors):
        """Test that the identity never sends E to zero."""
        ident = Identity(DIM)
        wit = CriterionWitness.single(
            INDICES,
            [1.0] * len(INDICES),
            tests_vectors,
            tests_vectors,
            [ident] * len(INDICES),
        )
        report = verify_criterion(ident, wit)
        assert report.r2 == tuple(1.0 for _ in INDICES)
        assert not report.passed

    def test_tail_start_must_leave_indices(self, tests_vectors):
        """Test that an empty tail is refused."""
        model, wit = _shift(2.0, tests_vectors)
        with pytest.raises(EmptyTailError):
            verify_criterion(model, wit, tail_start=len(INDICES))

    def test_csv_rows(self, tests_vectors):
        """Test that each index gets one row."""
        model, wit = _shift(2.0, tests_vectors)
        rows = verify_criterion(model, wit).csv_rows()
        assert [r[1] for r in rows] == list(INDICES)


class TestWitness:
    """Witness validation and combination."""

    def test_indices_must_increase(self, tests_vectors):
        """Test that repeated n_k are refused."""
        with pytest.raises(PreconditionError):
            CriterionWitness.single(
                [3, 3],
                [1.0, 1.0],
                tests_vectors,
                tests_vectors,
                [Identity(DIM)] * 2,
            )

    def test_scalars_must_be_positive(self, tests_vectors):
        """Test that s_k = 0 is refused."""
        with pytest.raises(PreconditionError):
            CriterionWitness.single(
                [1, 2],
                [1.0, 0.0],
                tests_vectors,
                tests_vectors,
                [Identity(DIM)] * 2,
            )

    def test_componentwise_maxima(self, tests_vectors):
        """Test that a combined witness reproduces componentwise maxima."""
        m2, w2 = _shift(2.0, tests_vectors)
        m3, w3 = _shift(3.0, tests_vectors)
        r2 = verify_criterion(m2, w2)
        r3 = verify_criterion(m3, w3)
        mixed = verify_criterion(
            DirectSum((m2, m3)), combine_witnesses([w2, w3])
        )
        assert mixed.r3 == tuple(max(a, b) for a, b in zip(r2.r3, r3.r3))
        assert mixed.r1 == tuple(max(a, b) for a, b in zip(r2.r1, r3.r1))
        assert mixed.passed

    def test_combined_shapes(self, tests_vectors):
        """Test that E and F become products of the parts."""
        _, w2 = _shift(2.0, tests_vectors)
        both = combine_witnesses([w2, w2])
        assert len(both.E) == 16 and len(both.E[0]) == 2 * DIM
        assert both.component_dims == (DIM, DIM)
        assert both.scalars[0] == (1.0, 1.0)

    def test_mismatched_indices(self, tests_vectors):
        """Test that witnesses on different n_k cannot be combined."""
        _, w = _shift(2.0, tests_vectors)
        _, other = scaled_shift_witness(
            2.0,
            DIM,
            range(31, 42),
            [1.0] * 11,
            tests_vectors,
            tests_vectors,
        )
        with pytest.raises(WitnessMismatchError):
            combine_witnesses([w, other])

    def test_nothing_to_combine(self):
        """Test that an empty list is refused."""
        with pytest.raises(PreconditionError):
            combine_witnesses([])


class TestSpectrum:
    """Point spectra of adjoints."""

    def test_backward_shift_has_empty_dual_spectrum(self):
        """Test the symbolic fact for weighted backward shifts."""
        s = spectrum_of_adjoint(WeightedBackwardShift.from_rule("unit", 8))
        assert s.kind is SpectrumKind.EMPTY
        assert s.provenance is Provenance.SYMBOLIC_FACT

    def test_volterra_has_empty_dual_spectrum(self):
        """Test the symbolic fact for the Volterra operator."""
        s = spectrum_of_adjoint(VolterraQuadrature(16))
        assert s.kind is SpectrumKind.EMPTY

    def test_extension_has_eigenvalue_one(self):
        """Test that S_u over a backward shift has sigma_p = {1}."""
        shift = WeightedBackwardShift.from_rule("exp2decay", 8)
        s = spectrum_of_adjoint(ExtensionSu(shift, np.ones(8)))
        assert s.kind is SpectrumKind.SINGLETON
        assert s.z == 1.0
        assert s.phase == TorusPoint.identity()

    def test_dense_matrices_are_numeric(self):
        """Test that a dense eigensolve is flagged as unreliable."""
        s = spectrum_of_adjoint(DenseMatrix(np.diag([2.0, 3.0])))
        assert s.kind is SpectrumKind.FULL_NUMERIC
        assert s.truncation_unreliable
        assert s.values == (2.0, 3.0)

    def test_singleton_needs_nonzero(self):
        """Test that sigma_p = {0} is not a valid singleton."""
        with pytest.raises(PreconditionError):
            SpectrumDescriptor.singleton(0)


class TestClassifyRPlus:
    """The R+-supercyclicity dichotomy."""

    def test_empty_spectrum(self):
        """Test that an empty dual spectrum gives R+-supercyclicity."""
        v = classify_rplus(True, SpectrumDescriptor.empty())
        assert v.verdict is RPlusKind.RPLUS_SUPERCYCLIC

    @pytest.mark.parametrize("z, order", [(-2, 2), (-1, 2), (1j, 4)])
    def test_roots_of_unity_on_axes(self, z, order):
        """Test that exact finite-order phases rule R+ out."""
        v = classify_rplus(True, SpectrumDescriptor.singleton(z))
        assert v.verdict is RPlusKind.NOT_RPLUS
        assert str(order) in v.reason

    def test_exact_phase_off_axis(self):
        """Test that an exact phase of 3/7 gives a definite verdict."""
        z = cmath.exp(2j * math.pi * 3 / 7)
        spectrum = SpectrumDescriptor.singleton(z, TorusPoint.exact("3/7"))
        assert classify_rplus(True, spectrum).verdict is RPlusKind.NOT_RPLUS

    def test_float_phase_of_root_is_indeterminate(self):
        """Test that a float phase near 1/8 is not trusted."""
        z = cmath.exp(2j * math.pi / 8)
        v = classify_rplus(True, SpectrumDescriptor.singleton(z))
        assert v.verdict is RPlusKind.INDETERMINATE
        assert v.certainty == "up_to_Q"

    def test_irrational_phase(self):
        """Test that an irrational phase keeps R+-supercyclicity."""
        z = cmath.exp(2j * math.pi * GOLDEN)
        v = classify_rplus(True, SpectrumDescriptor.singleton(z))
        assert v.verdict is RPlusKind.RPLUS_SUPERCYCLIC
        assert v.certainty == "up_to_Q"

    def test_positive_scaling(self):
        """Test that scaling z by a positive number keeps the verdict."""
        for z in (-1, 1j, cmath.exp(2j * math.pi * GOLDEN)):
            a = classify_rplus(True, SpectrumDescriptor.singleton(z))
            b = classify_rplus(True, SpectrumDescriptor.singleton(7.5 * z))
            assert a.verdict is b.verdict

    def test_not_assumed(self):
        """Test that nothing is claimed without supercyclicity."""
        v = classify_rplus(False, SpectrumDescriptor.empty())
        assert v.verdict is RPlusKind.INDETERMINATE

    def test_numeric_spectrum(self):
        """Test that a truncated eigensolve is indeterminate."""
        s = spectrum_of_adjoint(DenseMatrix(np.diag([2.0, 3.0])))
        assert classify_rplus(True, s).verdict is RPlusKind.INDETERMINATE


class TestRayObstruction:
    """Phases of f(s T^n x)."""

    def test_minus_one_gives_two_rays(self):
        """Test that T* f = -f confines phases to two rays."""
        model = DenseMatrix(np.diag([-1.0, 0.5]))
        r = ray_obstruction_check(
            model, np.array([1.0, 0.0]), -1.0, np.ones(2), 50, (1.0, 2.5)
        )
        assert r.applicable and r.order == 2
        assert r.distinct_phases == 2
        assert r.obstruction_holds

    def test_irrational_keeps_growing(self):
        """Test that an irrational phase produces new rays."""
        z = cmath.exp(2j * math.pi * GOLDEN)
        model = DenseMatrix(np.diag([z, 0.4]))
        e0 = np.array([1.0, 0.0])
        r = ray_obstruction_check(model, e0, z, np.ones(2), 60)
        assert not r.applicable and r.obstruction_holds is None
        assert r.distinct_phases > r.distinct_at_half

    def test_wrong_eigenvalue(self):
        """Test that a non-eigenpair is refused."""
        model = DenseMatrix(np.diag([-1.0, 0.5]))
        with pytest.raises(EigenpairResidualError):
            ray_obstruction_check(
                model, np.array([1.0, 0.0]), 1.0, np.ones(2), 5
            )

    def test_f_must_see_x(self):
        """Test that f(x) = 0 is refused."""
        model = DenseMatrix(np.diag([-1.0, 0.5]))
        with pytest.raises(PreconditionError):
            ray_obstruction_check(
                model, np.array([1.0, 0.0]), -1.0, np.array([0.0, 1.0]), 5
            )

    def test_slice_map(self):
        """Test that z^-1 T keeps {f = 1} invariant."""
        model = DenseMatrix(np.array([[2.0, 0.0], [1.0, 3.0]]))
        check = slice_map_check(model, np.array([1.0, 0.0]), 2.0)
        assert check.relative < 1e-12


class TestSuIdentities:
    """The polynomial p_n and the extension S_u."""

    def test_pn_is_geometric_sum(self, rng):
        """Test that p_3(S) v = v + S v + S^2 v."""
        a = rng.standard_normal((5, 5))
        v = rng.standard_normal(5)
        expected = v + a @ v + a @ a @ v
        assert pn_apply(DenseMatrix(a), 3, v) == pytest.approx(expected)
        assert np.array_equal(pn_apply(DenseMatrix(a), 1, v), v)

    def test_pn_needs_positive_n(self):
        """Test that p_0 is undefined."""
        with pytest.raises(PreconditionError):
            pn_apply(Identity(2), 0, np.ones(2))

    def test_telescoping(self, rng):
        """Test that p_n(S)(I - S) = I - S^n."""
        for _ in range(20):
            s = DenseMatrix(rng.standard_normal((6, 6)) / 4)
            x = rng.standard_normal(6)
            assert telescoping_check(s, x, 25).relative <= 1e-10

    def test_su_orbit(self, rng):
        """Test the closed form of S_u^n (y, 1)."""
        for n in (0, 1, 7, 30):
            s = DenseMatrix(rng.standard_normal((5, 5)) / 4)
            u, y = rng.standard_normal((2, 5))
            assert su_orbit_identity_check(s, u, y, n).relative <= 1e-9

    def test_scalar_fixed_point(self):
        """Test that S = 0, u = 1 sends (y, 1) to (1, 1)."""
        check = su_orbit_identity_check(
            DenseMatrix(np.array([[0.0]])),
            np.array([1.0]),
            np.array([0.3]),
            2,
        )
        assert check.residual == 0.0

    def test_similarity_when_u_in_range(self, rng):
        """Test that u = (I - S)v makes S_u similar to S + 1."""
        s = DenseMatrix(rng.standard_normal((6, 6)) / 3)
        assert su_similarity_check(s, rng.standard_normal(6)).relative < 1e-11

    def test_similarity_obstruction(self):
        """Test that u outside the range of I - S has no similarity."""
        salas = salas_operator("unit", 8)
        obstruction = su_similarity_obstruction(salas, basis_vector(8, 7))
        assert obstruction.optimum_residual >= 0.5
        assert obstruction.sampled_min <= obstruction.optimum_residual
