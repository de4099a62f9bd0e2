"""
Cyclicity in finite dimensions: Krylov rank, Vandermonde spans, direct
sums of scalar multiples and the Volterra intertwining identity.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
import scipy.linalg

from orbitbox.base import (
    KRYLOV_RANK_TOL,
    EigenDeficiencyError,
    PreconditionError,
    ZeroVectorError,
)
from orbitbox.operators import (
    CompositionJ,
    DenseMatrix,
    DirectSum,
    OperatorModel,
    ScalarMultiple,
    VolterraQuadrature,
    apply_power,
    as_vector,
    materialize,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KrylovReport:
    dim: int
    rank: int
    tol: float
    pivots: tuple[float, ...]

    @property
    def cyclic(self) -> bool:
        return self.rank == self.dim

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "rank": self.rank,
            "tol": self.tol,
            "pivots": list(self.pivots),
            "cyclic": self.cyclic,
        }


def _as_matrix(m: OperatorModel | np.ndarray) -> np.ndarray:
    if isinstance(m, OperatorModel):
        return materialize(m)
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise PreconditionError(f"need a square matrix, got {m.shape}")
    return m


def krylov_rank(
    m: OperatorModel | np.ndarray,
    x: np.ndarray,
    tol: float = KRYLOV_RANK_TOL,
    powers: int | None = None,
) -> KrylovReport:
    """Numerical rank of [x, Mx, ..., M^(p-1) x], p = dim by default.

    Columns are normalized before a column-pivoted QR; pivots below
    tol times the leading pivot count as zero.
    """
    mat = _as_matrix(m)
    d = mat.shape[0]
    x = as_vector(x)
    if x.shape[0] != d:
        raise PreconditionError(f"x has {x.shape[0]} coordinates, M is {d}")
    nrm = np.linalg.norm(x)
    if nrm == 0:
        raise ZeroVectorError("Krylov rank of the zero vector")
    p = d if powers is None else powers
    cols = np.zeros((d, p), dtype=np.result_type(mat, x))
    v = x / nrm
    for j in range(p):
        cols[:, j] = v
        v = mat @ v
        nv = np.linalg.norm(v)
        if nv == 0:
            break
        v = v / nv
    r, _ = scipy.linalg.qr(cols, mode="r", pivoting=True)
    pivots = np.abs(np.diag(r))
    rank = int(np.sum(pivots > tol * pivots[0])) if pivots.size else 0
    return KrylovReport(
        dim=d,
        rank=rank,
        tol=tol,
        pivots=tuple(float(v) for v in pivots),
    )


def vandermonde_span_rank(zs: Sequence[complex], d: int) -> int:
    """Rank of the vectors (z_1^k a, ..., z_n^k a), k < n, a in a basis."""
    if any(z == 0 for z in zs):
        raise PreconditionError("Vandermonde nodes must be nonzero")
    if len(set(complex(z) for z in zs)) < len(zs):
        logger.warning(f"repeated nodes in {list(zs)}; expect deficiency")
    n = len(zs)
    v = np.vander(np.asarray(zs, dtype=complex), n, increasing=True)
    return int(np.linalg.matrix_rank(np.kron(v, np.eye(d))))


def vandermonde_span_check(zs: Sequence[complex], d: int) -> bool:
    return vandermonde_span_rank(zs, d) == len(zs) * d


def scaled_direct_sum(
    model: OperatorModel, zs: Sequence[complex]
) -> DirectSum:
    """z_1 T + ... + z_n T."""
    return DirectSum(tuple(ScalarMultiple(z, model) for z in zs))


def ratio_structure_check(
    model: OperatorModel,
    zs: Sequence[complex],
    u: np.ndarray,
    n_max: int,
) -> float:
    """Largest relative gap between component_i(S^k x) and
    (z_i/z_1)^k component_1(S^k x) for x = (u, ..., u)."""
    if zs[0] == 0:
        raise PreconditionError("z_1 must be nonzero")
    u = as_vector(u)
    if not np.any(u):
        raise ZeroVectorError("u = 0")
    s = scaled_direct_sum(model, zs)
    x = np.tile(u, len(zs))
    worst = 0.0
    for k in range(n_max + 1):
        unit, lognorm = apply_power(s, k, x)
        if lognorm == -math.inf:
            break
        parts = s.split(unit)
        for z, c in zip(zs[1:], parts[1:]):
            predicted = (complex(z) / complex(zs[0])) ** k * parts[0]
            scale = max(
                float(np.linalg.norm(c)), float(np.linalg.norm(predicted))
            )
            if scale > 0:
                gap = float(np.linalg.norm(c - predicted)) / scale
                worst = max(worst, gap)
    logger.debug(f"ratio structure over k <= {n_max}: {worst:.3g}")
    return worst


def _distinct(values: np.ndarray, tol: float) -> bool:
    for a, b in itertools.combinations(values, 2):
        if abs(a - b) <= tol:
            return False
    return True


@dataclass(frozen=True)
class DirectSumCyclicity:
    predicted: bool
    krylov: KrylovReport
    products: tuple[complex, ...]

    @property
    def agrees(self) -> bool:
        return self.predicted == self.krylov.cyclic

    def to_dict(self) -> dict[str, Any]:
        return {
            "predicted": self.predicted,
            "krylov": self.krylov.to_dict(),
            "products": [[p.real, p.imag] for p in self.products],
            "agrees": self.agrees,
        }


def direct_sum_cyclicity(
    model: OperatorModel | np.ndarray,
    zs: Sequence[complex],
    u: np.ndarray,
    tol: float = KRYLOV_RANK_TOL,
) -> DirectSumCyclicity:
    """Krylov test of z_1 T + ... + z_n T from (u, ..., u) next to the
    eigenvalue-product prediction: cyclic iff all z_i lambda_j differ."""
    mat = _as_matrix(model)
    u = as_vector(u)
    lam, vecs = np.linalg.eig(mat)
    scale = max(1.0, float(np.max(np.abs(lam))))
    if not _distinct(lam, 1e-8 * scale):
        raise PreconditionError("T needs distinct eigenvalues")
    coeffs = np.linalg.solve(vecs, u)
    if np.min(np.abs(coeffs)) <= 1e-10 * max(1.0, float(np.linalg.norm(u))):
        raise EigenDeficiencyError(
            "u has no component along some eigenvector"
        )
    products = np.array([complex(z) * l for z in zs for l in lam])
    predicted = _distinct(
        products, 1e-9 * max(1.0, float(np.max(np.abs(products))))
    )
    s = scaled_direct_sum(DenseMatrix(mat), zs)
    report = krylov_rank(s, np.tile(u, len(zs)), tol)
    logger.debug(
        f"direct sum of {len(zs)} copies: predicted={predicted}, "
        f"rank {report.rank}/{report.dim}"
    )
    return DirectSumCyclicity(
        predicted=predicted,
        krylov=report,
        products=tuple(complex(p) for p in products),
    )


def roots_of_unity_instance(
    rng: np.random.Generator, n: int, d: int
) -> tuple[np.ndarray, list[complex], np.ndarray]:
    """Random (T, z, u) whose eigenvalue products are N-th roots of unity,
    N = n*d, so every product set is either all of them or collides."""
    big = n * d
    omega = np.exp(2j * np.pi * np.arange(big) / big)
    lam = omega[rng.choice(big, size=d, replace=False)]
    zs = [complex(omega[i]) for i in rng.integers(0, big, size=n)]
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, _ = np.linalg.qr(a)
    t = q @ np.diag(lam) @ q.conj().T
    u = q @ np.ones(d)
    return t, zs, u


def volterra_intertwine_residual(m: int) -> float:
    """Spectral norm of 2 J V - V^T J on an m-point grid."""
    if m < 8:
        raise PreconditionError(f"grid too coarse: m = {m} < 8")
    j = materialize(CompositionJ(m))
    v = materialize(VolterraQuadrature(m))
    return float(np.linalg.norm(2 * j @ v - v.T @ j, 2))


@dataclass(frozen=True)
class PhiReport:
    m: int
    phis: tuple[float, ...]
    single_step_defect: float

    @property
    def max_abs_phi(self) -> float:
        return max(abs(p) for p in self.phis)

    @property
    def ratio(self) -> float:
        if self.max_abs_phi == 0:
            return 0.0
        return self.max_abs_phi / self.single_step_defect

    @property
    def constant(self) -> float:
        """C in max |Phi| <= C/m."""
        return self.max_abs_phi * self.m

    def to_dict(self) -> dict[str, Any]:
        return {
            "m": self.m,
            "phis": list(self.phis),
            "max_abs_phi": self.max_abs_phi,
            "single_step_defect": self.single_step_defect,
            "ratio": self.ratio,
            "C": self.constant,
        }


def phi_annihilation_check(
    f: np.ndarray, g: np.ndarray, m: int, n_max: int
) -> PhiReport:
    """Phi(u, v) = <u, Jg> - <v, J^T f> along (V + 2V)^n (f, g).

    The pairing is sum x_i y_i / m. The defect is |2JV - V^T J| |f| |g|.
    """
    f, g = as_vector(f), as_vector(g)
    if f.shape != (m,) or g.shape != (m,):
        raise PreconditionError(f"f and g must be grid functions on {m}")
    jm = materialize(CompositionJ(m))
    vm = materialize(VolterraQuadrature(m))
    jg, jtf = jm @ g, jm.T @ f
    u, v = f.copy(), g.copy()
    phis = []
    for _ in range(n_max + 1):
        phis.append(float(np.dot(u, jg) - np.dot(v, jtf)) / m)
        u, v = vm @ u, 2.0 * (vm @ v)
    norm_h = math.sqrt(float(np.dot(f, f)) / m) * math.sqrt(
        float(np.dot(g, g)) / m
    )
    defect = volterra_intertwine_residual(m) * norm_h
    return PhiReport(m=m, phis=tuple(phis), single_step_defect=defect)


@dataclass(frozen=True)
class SquareSearchReport:
    instances: int
    direct_sum_cyclic: int
    square_cyclic: int
    candidates: tuple[int, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "instances": self.instances,
            "direct_sum_cyclic": self.direct_sum_cyclic,
            "square_cyclic": self.square_cyclic,
            "candidates": list(self.candidates),
        }


def square_cyclicity_search(
    count: int, max_dim: int, seed: int
) -> SquareSearchReport:
    """Look for small integer T with T + T cyclic and T^2 not.

    Counts only; in finite dimensions T + T repeats every eigenvalue, so
    no candidate is expected.
    """
    rng = np.random.default_rng(seed)
    both = square = 0
    candidates = []
    for i in range(count):
        d = int(rng.integers(1, max_dim + 1))
        t = rng.integers(-2, 3, size=(d, d)).astype(float)
        x = rng.standard_normal(2 * d)
        ts = scipy.linalg.block_diag(t, t)
        sum_cyclic = krylov_rank(ts, x).cyclic
        sq_cyclic = krylov_rank(t @ t, x[:d]).cyclic
        both += sum_cyclic
        square += sq_cyclic
        if sum_cyclic and not sq_cyclic:
            candidates.append(i)
    logger.info(
        f"square search: {count} matrices, {both} with T+T cyclic, "
        f"{len(candidates)} candidates"
    )
    return SquareSearchReport(
        instances=count,
        direct_sum_cyclic=both,
        square_cyclic=square,
        candidates=tuple(candidates),
    )
