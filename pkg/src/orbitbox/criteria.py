"""
Residual forms of the Supercyclicity Criterion, witness combination for
direct sums, the R+-supercyclicity dichotomy and the S_u algebra.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

import numpy as np

from orbitbox.base import (
    DEFAULT_MAX_DENOMINATOR,
    EIGENPAIR_TOL,
    PHASE_CLUSTER_TOL,
    EigenpairResidualError,
    EmptyTailError,
    PreconditionError,
    WitnessMismatchError,
)
from orbitbox.operators import (
    DirectSum,
    ExtensionSu,
    IdentityPlus,
    OperatorModel,
    Power,
    ScalarMultiple,
    VolterraQuadrature,
    WeightedBackwardShift,
    WeightedForwardShift,
    adjoint,
    apply,
    apply_power,
    as_vector,
    materialize,
)
from orbitbox.torus import TorusPoint, is_generator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CriterionWitness:
    """(n_k, s_k, E, F, S_k) for one operator or a direct sum.

    `scalars[k]` has one entry per component; `component_dims` splits
    vectors into the components whose norms are maxed together.
    """

    indices: tuple[int, ...]
    scalars: tuple[tuple[float, ...], ...]
    E: tuple[np.ndarray, ...] = field(compare=False)
    F: tuple[np.ndarray, ...] = field(compare=False)
    right_inverses: tuple[OperatorModel, ...]
    component_dims: tuple[int, ...]

    def __post_init__(self):
        if not self.indices:
            raise PreconditionError("empty index sequence")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise PreconditionError("n_k must be strictly increasing")
        if not self.E or not self.F:
            raise PreconditionError("test sets E and F must be nonempty")
        if len(self.scalars) != len(self.indices) or len(
            self.right_inverses
        ) != len(self.indices):
            raise PreconditionError(
                "need one scalar tuple and one right inverse per index"
            )
        parts = len(self.component_dims)
        for s in self.scalars:
            if len(s) != parts or any(not v > 0 for v in s):
                raise PreconditionError(
                    f"each s_k needs {parts} positive entries, got {s}"
                )

    @classmethod
    def single(
        cls,
        indices: Sequence[int],
        scalars: Sequence[float],
        E: Sequence[np.ndarray],
        F: Sequence[np.ndarray],
        right_inverses: Sequence[OperatorModel],
    ) -> "CriterionWitness":
        E = tuple(as_vector(x) for x in E)
        F = tuple(as_vector(y) for y in F)
        return cls(
            indices=tuple(indices),
            scalars=tuple((float(s),) for s in scalars),
            E=E,
            F=F,
            right_inverses=tuple(right_inverses),
            component_dims=(len(E[0]),),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "indices": list(self.indices),
            "scalars": [list(s) for s in self.scalars],
            "component_dims": list(self.component_dims),
            "E_size": len(self.E),
            "F_size": len(self.F),
        }


def scaled_shift_witness(
    factor: float,
    dim: int,
    indices: Sequence[int],
    scalars: Sequence[float],
    E: Sequence[np.ndarray],
    F: Sequence[np.ndarray],
) -> tuple[OperatorModel, CriterionWitness]:
    """T = factor * B with S_k = (F / factor)^(n_k) on unit shifts."""
    shift = WeightedBackwardShift.from_rule("unit", dim)
    model = ScalarMultiple(factor, shift)
    step = ScalarMultiple(
        1.0 / factor, WeightedForwardShift.from_rule("unit", dim)
    )
    witness = CriterionWitness.single(
        indices, scalars, E, F, [Power(step, n) for n in indices]
    )
    return model, witness


@dataclass(frozen=True)
class CriterionReport:
    indices: tuple[int, ...]
    r1: tuple[float, ...]
    r2: tuple[float, ...]
    r3: tuple[float, ...]
    tail_start: int
    tol: float

    def tail_max(self) -> tuple[float, float, float]:
        k = self.tail_start
        return max(self.r1[k:]), max(self.r2[k:]), max(self.r3[k:])

    @property
    def passed(self) -> bool:
        return all(r <= self.tol for r in self.tail_max())

    def to_dict(self) -> dict[str, Any]:
        return {
            "indices": list(self.indices),
            "r1": list(self.r1),
            "r2": list(self.r2),
            "r3": list(self.r3),
            "tail_start": self.tail_start,
            "tol": self.tol,
            "passed": self.passed,
        }

    def csv_rows(self) -> list[list[Any]]:
        return [
            [k, n, a, b, c]
            for k, (n, a, b, c) in enumerate(
                zip(self.indices, self.r1, self.r2, self.r3)
            )
        ]


def _raw_power(model: OperatorModel, n: int, x: np.ndarray) -> np.ndarray:
    """T^n x without renormalization."""
    if n == 0:
        return as_vector(x)
    v = apply(model, x)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n - 1):
            v = model._apply(v)
    return v


def _component_norms(v: np.ndarray, dims: Sequence[int]) -> list[float]:
    out, start = [], 0
    for d in dims:
        out.append(float(np.linalg.norm(v[start : start + d])))
        start += d
    return out


def verify_criterion(
    model: OperatorModel,
    witness: CriterionWitness,
    tail_start: int = 0,
    tol: float = 1e-8,
) -> CriterionReport:
    """Residual curves r1, r2, r3 of the criterion along n_k.

    Norms on direct sums are the max of component norms, so combined
    witnesses reproduce the componentwise maxima exactly.
    """
    if tail_start >= len(witness.indices) or tail_start < 0:
        raise EmptyTailError(
            f"tail start {tail_start} leaves nothing of "
            f"{len(witness.indices)} indices"
        )
    dims = witness.component_dims
    r1, r2, r3 = [], [], []
    for n, s, right in zip(
        witness.indices, witness.scalars, witness.right_inverses
    ):
        a = b = c = 0.0
        for y in witness.F:
            sy = apply(right, y)
            back = _raw_power(model, n, sy)
            a = max(a, *_component_norms(back - y, dims))
            c = max(
                c,
                *[v / sj for v, sj in zip(_component_norms(sy, dims), s)],
            )
        for x in witness.E:
            tx = _raw_power(model, n, x)
            with np.errstate(over="ignore", invalid="ignore"):
                b = max(
                    b,
                    *[
                        sj * v
                        for v, sj in zip(_component_norms(tx, dims), s)
                    ],
                )
        r1.append(a)
        r2.append(b)
        r3.append(c)
    report = CriterionReport(
        indices=witness.indices,
        r1=tuple(r1),
        r2=tuple(r2),
        r3=tuple(r3),
        tail_start=tail_start,
        tol=tol,
    )
    logger.info(
        f"criterion over {len(r1)} indices: tail maxima "
        f"{report.tail_max()}, passed={report.passed}"
    )
    return report


def combine_witnesses(
    witnesses: Sequence[CriterionWitness],
) -> CriterionWitness:
    """Witness for T_1 + ... + T_k from witnesses sharing n_l."""
    if not witnesses:
        raise PreconditionError("nothing to combine")
    first = witnesses[0]
    for i, w in enumerate(witnesses[1:], start=1):
        if w.indices != first.indices:
            raise WitnessMismatchError(
                f"witness {i} uses indices {w.indices}, expected "
                f"{first.indices}"
            )
    if len(witnesses) == 1:
        return first
    E = tuple(
        np.concatenate(xs)
        for xs in itertools.product(*[w.E for w in witnesses])
    )
    F = tuple(
        np.concatenate(ys)
        for ys in itertools.product(*[w.F for w in witnesses])
    )
    scalars = tuple(
        tuple(itertools.chain.from_iterable(w.scalars[k] for w in witnesses))
        for k in range(len(first.indices))
    )
    right = tuple(
        DirectSum(tuple(w.right_inverses[k] for w in witnesses))
        for k in range(len(first.indices))
    )
    dims = tuple(
        itertools.chain.from_iterable(w.component_dims for w in witnesses)
    )
    return CriterionWitness(
        indices=first.indices,
        scalars=scalars,
        E=E,
        F=F,
        right_inverses=right,
        component_dims=dims,
    )


class SpectrumKind(str, Enum):
    EMPTY = "empty"
    SINGLETON = "singleton"
    FULL_NUMERIC = "full_numeric"


class Provenance(str, Enum):
    SYMBOLIC_FACT = "symbolic_fact"
    DENSE_EIGENSOLVE = "dense_eigensolve"


@dataclass(frozen=True)
class SpectrumDescriptor:
    """Point spectrum of the dual operator."""

    kind: SpectrumKind
    provenance: Provenance
    values: tuple[complex, ...] = ()
    truncation_unreliable: bool = False
    phase: TorusPoint | None = None

    def __post_init__(self):
        if self.kind is SpectrumKind.SINGLETON:
            if len(self.values) != 1 or self.values[0] == 0:
                raise PreconditionError("singleton needs one nonzero z")

    @classmethod
    def empty(cls) -> "SpectrumDescriptor":
        return cls(SpectrumKind.EMPTY, Provenance.SYMBOLIC_FACT)

    @classmethod
    def singleton(
        cls, z: complex, phase: TorusPoint | None = None
    ) -> "SpectrumDescriptor":
        return cls(
            SpectrumKind.SINGLETON,
            Provenance.SYMBOLIC_FACT,
            (complex(z),),
            phase=phase,
        )

    @property
    def z(self) -> complex:
        return self.values[0]

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "provenance": self.provenance.value,
            "values": [[v.real, v.imag] for v in self.values],
            "truncation_unreliable": self.truncation_unreliable,
            "phase": self.phase.to_dict() if self.phase else None,
        }


def _symbolic_spectrum(model: OperatorModel) -> SpectrumDescriptor | None:
    match model:
        case WeightedBackwardShift():
            return SpectrumDescriptor.empty()
        case VolterraQuadrature(transposed=False):
            return SpectrumDescriptor.empty()
        case ExtensionSu(inner=inner):
            sub = _symbolic_spectrum(inner)
            if sub is not None and sub.kind is SpectrumKind.EMPTY:
                # f0(y, t) = t is the only eigenfunctional
                return SpectrumDescriptor.singleton(
                    1.0, TorusPoint.identity()
                )
        case IdentityPlus(inner=inner) | Power(inner=inner):
            sub = _symbolic_spectrum(inner)
            if sub is not None and sub.kind is SpectrumKind.EMPTY:
                return sub
        case ScalarMultiple(z=z, inner=inner) if z != 0:
            sub = _symbolic_spectrum(inner)
            if sub is not None and sub.kind is SpectrumKind.EMPTY:
                return sub
            if sub is not None and sub.kind is SpectrumKind.SINGLETON:
                return SpectrumDescriptor.singleton(z * sub.z)
        case DirectSum(parts=parts):
            subs = [_symbolic_spectrum(p) for p in parts]
            if all(
                s is not None and s.kind is SpectrumKind.EMPTY for s in subs
            ):
                return SpectrumDescriptor.empty()
    return None


def spectrum_of_adjoint(model: OperatorModel) -> SpectrumDescriptor:
    known = _symbolic_spectrum(model)
    if known is not None:
        return known
    eig = np.linalg.eigvals(materialize(model).T)
    values = sorted((complex(v) for v in eig), key=lambda v: (v.real, v.imag))
    logger.debug(f"dense eigensolve of {type(model).__name__}: {values}")
    return SpectrumDescriptor(
        SpectrumKind.FULL_NUMERIC,
        Provenance.DENSE_EIGENSOLVE,
        tuple(values),
        truncation_unreliable=True,
    )


def phase_of(z: complex) -> TorusPoint:
    """z/|z| as a point of T, exact when z lies on an axis."""
    return TorusPoint.from_complex(z)


class RPlusKind(str, Enum):
    RPLUS_SUPERCYCLIC = "rplus_supercyclic"
    NOT_RPLUS = "not_rplus"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class RPlusVerdict:
    verdict: RPlusKind
    reason: str
    inputs: dict[str, Any]
    certainty: str = "exact"

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "reason": self.reason,
            "certainty": self.certainty,
            "inputs": self.inputs,
        }


def classify_rplus(
    supercyclic_assumed: bool,
    spectrum: SpectrumDescriptor,
    max_denominator: int = DEFAULT_MAX_DENOMINATOR,
) -> RPlusVerdict:
    """Supercyclic T is R+-supercyclic unless sigma_p(T*) = {z} with
    z/|z| of finite order."""
    inputs = {
        "supercyclic_assumed": supercyclic_assumed,
        "spectrum": spectrum.to_dict(),
        "Q": max_denominator,
    }

    def verdict(kind: RPlusKind, reason: str, certainty: str = "exact"):
        return RPlusVerdict(kind, reason, inputs, certainty)

    if not supercyclic_assumed:
        return verdict(RPlusKind.INDETERMINATE, "supercyclicity not assumed")
    if spectrum.truncation_unreliable or (
        spectrum.kind is SpectrumKind.FULL_NUMERIC
    ):
        return verdict(
            RPlusKind.INDETERMINATE,
            "point spectrum comes from a truncated eigensolve",
        )
    if spectrum.kind is SpectrumKind.EMPTY:
        return verdict(
            RPlusKind.RPLUS_SUPERCYCLIC, "dual point spectrum is empty"
        )
    phase = spectrum.phase or phase_of(spectrum.z)
    gen = is_generator(phase, max_denominator)
    if gen.generator:
        return verdict(
            RPlusKind.RPLUS_SUPERCYCLIC,
            "z/|z| has infinite order",
            gen.certainty,
        )
    if gen.certainty == "exact":
        return verdict(
            RPlusKind.NOT_RPLUS, f"z/|z| has finite order {gen.order}"
        )
    return verdict(
        RPlusKind.INDETERMINATE,
        f"z/|z| looks like a root of unity of order {gen.order} up to "
        f"Q={max_denominator}, but the phase is not exact",
        gen.certainty,
    )


def _count_distinct(phases: Sequence[float], tol: float) -> int:
    if not phases:
        return 0
    p = np.sort(np.mod(phases, 1.0))
    gaps = np.diff(p)
    count = 1 + int(np.sum(gaps > tol))
    if count > 1 and (p[0] + 1.0 - p[-1]) <= tol:
        count -= 1
    return count


@dataclass(frozen=True)
class RayObstructionReport:
    applicable: bool
    order: int | None
    distinct_phases: int
    distinct_at_half: int
    obstruction_holds: bool | None
    eigen_residual: float
    n_max: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "applicable": self.applicable,
            "order": self.order,
            "distinct_phases": self.distinct_phases,
            "distinct_at_half": self.distinct_at_half,
            "obstruction_holds": self.obstruction_holds,
            "eigen_residual": self.eigen_residual,
            "n_max": self.n_max,
        }


def ray_obstruction_check(
    model: OperatorModel,
    f: np.ndarray,
    z: complex,
    x: np.ndarray,
    n_max: int,
    s_samples: Sequence[float] = (1.0,),
    max_denominator: int = DEFAULT_MAX_DENOMINATOR,
    phase: TorusPoint | None = None,
) -> RayObstructionReport:
    """Phases of f(s T^n x) = s z^n f(x) fill at most q rays.

    `phase` gives z/|z| exactly when z is off the axes.
    """
    f = as_vector(f)
    resid = float(
        np.linalg.norm(apply(adjoint(model), f) - np.conj(z) * f)
    ) / max(1.0, float(np.linalg.norm(f)))
    if resid > EIGENPAIR_TOL:
        raise EigenpairResidualError(
            f"|T*f - conj(z) f| = {resid:.3g} exceeds {EIGENPAIR_TOL}"
        )
    if abs(np.vdot(f, x)) == 0:
        raise PreconditionError("f(x) = 0")

    phases: list[float] = []
    half: int | None = None
    for n in range(n_max + 1):
        unit, _ = apply_power(model, n, x)
        val = complex(np.vdot(f, unit))
        for s in s_samples:
            w = s * val
            phases.append(math.atan2(w.imag, w.real) / (2 * math.pi))
        if n == n_max // 2:
            half = _count_distinct(phases, PHASE_CLUSTER_TOL)
    distinct = _count_distinct(phases, PHASE_CLUSTER_TOL)

    gen = is_generator(phase or phase_of(z), max_denominator)
    applicable = not gen.generator and gen.certainty == "exact"
    holds = None
    if applicable:
        holds = distinct <= gen.order
    logger.info(
        f"ray obstruction: {distinct} phases over n <= {n_max}, "
        f"order {gen.order}, holds={holds}"
    )
    return RayObstructionReport(
        applicable=applicable,
        order=gen.order if not gen.generator else None,
        distinct_phases=distinct,
        distinct_at_half=half or 0,
        obstruction_holds=holds,
        eigen_residual=resid,
        n_max=n_max,
    )


def slice_map_check(
    model: OperatorModel,
    f: np.ndarray,
    z: complex,
    samples: int = 16,
    seed: int = 0,
) -> "IdentityCheck":
    """z^-1 T maps the affine slice {f = 1} into itself."""
    f = as_vector(f)
    if z == 0:
        raise PreconditionError("z = 0")
    if float(
        np.linalg.norm(apply(adjoint(model), f) - np.conj(z) * f)
    ) > EIGENPAIR_TOL * max(1.0, float(np.linalg.norm(f))):
        raise EigenpairResidualError("f is not an eigenfunctional for z")
    rng = np.random.default_rng(seed)
    e = f / np.vdot(f, f)
    worst = 0.0
    for _ in range(samples):
        w = rng.standard_normal(model.dim).astype(e.dtype)
        v = e + (w - np.vdot(f, w) * e)
        image = apply(model, v) / z
        worst = max(worst, abs(complex(np.vdot(f, image)) - 1.0))
    return IdentityCheck(worst, 1.0)


@dataclass(frozen=True)
class IdentityCheck:
    residual: float
    scale: float

    @property
    def relative(self) -> float:
        return self.residual / self.scale if self.scale > 0 else self.residual

    def to_dict(self) -> dict[str, float]:
        return {
            "residual": self.residual,
            "scale": self.scale,
            "relative": self.relative,
        }


def _pn(
    s: OperatorModel, n: int, v: np.ndarray
) -> tuple[np.ndarray, float]:
    """p_n(S) v and the largest |S^j v| met on the way."""
    w = apply(s, v) if n > 1 else v
    acc = np.array(v, dtype=np.result_type(v, w), copy=True)
    biggest = float(np.linalg.norm(v))
    for j in range(1, n):
        if j > 1:
            w = s._apply(w)
        acc = acc + w
        biggest = max(biggest, float(np.linalg.norm(w)))
    return acc, biggest


def pn_apply(s: OperatorModel, n: int, v: np.ndarray) -> np.ndarray:
    """p_n(S) v = sum_{j<n} S^j v."""
    if n < 1:
        raise PreconditionError(f"p_n needs n >= 1, got {n}")
    return _pn(s, n, as_vector(v))[0]


def telescoping_check(
    s: OperatorModel, x: np.ndarray, n: int
) -> IdentityCheck:
    """p_n(S)(I - S)x against x - S^n x."""
    if n < 1:
        raise PreconditionError(f"p_n needs n >= 1, got {n}")
    x = as_vector(x)
    lhs, biggest = _pn(s, n, x - apply(s, x))
    snx = _raw_power(s, n, x)
    rhs = x - snx
    scale = max(biggest, float(np.linalg.norm(x)), float(np.linalg.norm(snx)))
    return IdentityCheck(float(np.linalg.norm(lhs - rhs)), scale)


def su_orbit_identity_check(
    s: OperatorModel, u: np.ndarray, y: np.ndarray, n: int
) -> IdentityCheck:
    """S_u^n (y, 1) against (y + p_n(S)(u - (I - S)y), 1), max norm."""
    u, y = as_vector(u), as_vector(y)
    su = ExtensionSu(s, u)
    v = np.concatenate([y, [1.0]]).astype(np.result_type(y, u, float))
    for _ in range(n):
        v = apply(su, v)
    if n == 0:
        head = y
    else:
        head = y + pn_apply(s, n, u - (y - apply(s, y)))
    rhs = np.concatenate([head, [1.0]])
    scale = max(1.0, float(np.max(np.abs(v))), float(np.max(np.abs(rhs))))
    return IdentityCheck(float(np.max(np.abs(v - rhs))), scale)


def _similarity_residual(
    s_mat: np.ndarray, u: np.ndarray, v: np.ndarray
) -> float:
    d = s_mat.shape[0]
    dtype = np.result_type(s_mat, u, v)
    lam = np.eye(d + 1, dtype=dtype)
    lam[:d, d] = v
    lam_inv = np.eye(d + 1, dtype=dtype)
    lam_inv[:d, d] = -v
    su = np.zeros((d + 1, d + 1), dtype=dtype)
    su[:d, :d] = s_mat
    su[:d, d] = u
    su[d, d] = 1
    s0 = np.zeros_like(su)
    s0[:d, :d] = s_mat
    s0[d, d] = 1
    return float(np.linalg.norm(lam_inv @ su @ lam - s0, 2))


def su_similarity_check(s: OperatorModel, v: np.ndarray) -> IdentityCheck:
    """Lambda^-1 S_u Lambda = S + I for u = (I - S)v."""
    v = as_vector(v)
    s_mat = materialize(s)
    u = v - s_mat @ v
    scale = max(
        1.0, float(np.linalg.norm(s_mat, 2)), float(np.linalg.norm(v))
    )
    return IdentityCheck(_similarity_residual(s_mat, u, v), scale)


@dataclass(frozen=True)
class SimilarityObstruction:
    optimum_residual: float
    sampled_min: float
    samples: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "optimum_residual": self.optimum_residual,
            "sampled_min": self.sampled_min,
            "samples": self.samples,
        }


def su_similarity_obstruction(
    s: OperatorModel, u: np.ndarray, samples: int = 64, seed: int = 0
) -> SimilarityObstruction:
    """Best similarity residual over v when u may miss (I - S)."""
    u = as_vector(u)
    s_mat = materialize(s)
    a = np.eye(s.dim) - s_mat
    v_best, *_ = np.linalg.lstsq(a, u, rcond=None)
    optimum = _similarity_residual(s_mat, u, v_best)
    rng = np.random.default_rng(seed)
    sampled = [
        _similarity_residual(s_mat, u, v_best + rng.standard_normal(s.dim))
        for _ in range(samples)
    ]
    return SimilarityObstruction(
        optimum_residual=optimum,
        sampled_min=min([optimum, *sampled]),
        samples=samples,
    )
