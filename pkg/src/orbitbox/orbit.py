"""
Orbits, scaled orbits and group-coupled orbits, with epsilon-net coverage
as a falsifiable stand-in for density, and the coset experiment for
powers T^q.
"""

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from orbitbox.base import CoverageMode, PreconditionError
from orbitbox.operators import (
    OperatorModel,
    ScalarField,
    apply,
    apply_power,
    leaked_norm,
)
from orbitbox.torus import (
    CosetEstimate,
    TorusPoint,
    closure_of_powers,
    estimate_cosets,
)

logger = logging.getLogger(__name__)

# net rows per chunk keep chunk * orbit length * max(dim, k) below this
CHUNK_BUDGET = 4_000_000


@dataclass(frozen=True)
class OrbitPoint:
    unit: np.ndarray = field(compare=False)
    lognorm: float
    leaked: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.lognorm == -math.inf

    def vector(self) -> np.ndarray:
        if self.is_zero:
            return np.zeros_like(self.unit)
        with np.errstate(over="ignore"):
            return self.unit * np.exp(self.lognorm)


def orbit(model: OperatorModel, x: np.ndarray, n: int) -> list[OrbitPoint]:
    """T^k x for k = 0..n, each as a unit vector plus log norm.

    `leaked` is the fraction of T(T^(k-1) x) lost past the window.
    """
    unit, lognorm = apply_power(model, 0, x)
    points = [OrbitPoint(unit, lognorm)]
    for _ in range(n):
        if lognorm == -math.inf:
            points.append(OrbitPoint(unit, lognorm))
            continue
        leak = leaked_norm(model, unit)
        v = model._apply(unit)
        nrm = float(np.linalg.norm(v))
        frac = leak / (nrm + leak) if leak > 0 else 0.0
        if nrm == 0.0:
            unit, lognorm = np.zeros_like(v), -math.inf
        else:
            unit, lognorm = v / nrm, lognorm + math.log(nrm)
        points.append(OrbitPoint(unit, lognorm, frac))
    return points


def orbit_shift_residual(
    model: OperatorModel, x: np.ndarray, n: int
) -> float:
    """Discrepancy between orbit(T, Tx, n) and orbit(T, x, n+1)[1:]."""
    shifted = orbit(model, apply(model, x), n)
    tail = orbit(model, x, n + 1)[1:]
    worst = 0.0
    for a, b in zip(shifted, tail):
        if a.is_zero or b.is_zero:
            if a.is_zero != b.is_zero:
                return math.inf
            continue
        worst = max(
            worst,
            float(np.linalg.norm(a.unit - b.unit)),
            abs(a.lognorm - b.lognorm) / max(1.0, abs(b.lognorm)),
        )
    return worst


def sphere_net(
    dim: int,
    count: int,
    seed: int,
    field: ScalarField = ScalarField.REAL,
) -> np.ndarray:
    """Normalized Gaussian draws; rows are unit vectors."""
    if count < 1:
        raise ValueError("net needs at least one point")
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((count, dim))
    if field is ScalarField.COMPLEX:
        pts = pts + 1j * rng.standard_normal((count, dim))
    norms = np.linalg.norm(pts, axis=1, keepdims=True)
    return pts / norms


@dataclass(frozen=True)
class CoverageReport:
    net_size: int
    epsilon: float
    mode: CoverageMode
    fraction: float
    curve: tuple[float, ...]
    seed: int | None = None
    skipped: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "epsilon": self.epsilon,
            "net_size": self.net_size,
            "fraction": self.fraction,
            "curve": list(self.curve),
            "seed": self.seed,
            "skipped": self.skipped,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["prefix", "fraction"])
        for k, f in enumerate(self.curve):
            w.writerow([k, repr(f)])
        return buf.getvalue()


def _pairwise(
    orbit_vecs: np.ndarray, net: np.ndarray, mode: CoverageMode
) -> np.ndarray:
    """Distances, shape (len(net), len(orbit_vecs))."""
    if mode is CoverageMode.PROJECTIVE_COMPLEX:
        overlap = np.minimum(1.0, np.abs(net @ orbit_vecs.conj().T))
        return np.sqrt(np.maximum(0.0, 2.0 - 2.0 * overlap))
    d = net[:, None, :] - orbit_vecs[None, :, :]
    return np.sqrt(np.sum(np.abs(d) ** 2, axis=2))


def _first_hits(
    orbit_vecs: np.ndarray,
    valid: np.ndarray,
    net: np.ndarray,
    epsilon: float,
    mode: CoverageMode,
    torus: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Index of the first orbit point within epsilon of each net point.

    -1 where nothing hits. `torus` holds the angles of the orbit and net
    sides in turns; their distance combines with the vector one by max
    (product metric).
    """
    n_orbit, dim = orbit_vecs.shape
    width = dim if torus is None else max(dim, torus[0].shape[1])
    first = np.full(len(net), -1, dtype=np.int64)
    chunk = max(1, CHUNK_BUDGET // max(1, n_orbit * width))
    for start in range(0, len(net), chunk):
        stop = start + chunk
        d = _pairwise(orbit_vecs, net[start:stop], mode)
        if torus is not None:
            d = np.maximum(
                d, _torus_distances(torus[0], torus[1][start:stop])
            )
        hit = (d <= epsilon) & valid[None, :]
        any_hit = hit.any(axis=1)
        idx = np.argmax(hit, axis=1)
        first[start:stop] = np.where(any_hit, idx, -1)
    return first



def _curve(first: np.ndarray, length: int, net_size: int) -> tuple:
    counts = np.bincount(first[first >= 0], minlength=length)[:length]
    return tuple(float(c) for c in np.cumsum(counts) / net_size)


def _orbit_matrix(
    points: Sequence[OrbitPoint] | np.ndarray, mode: CoverageMode
) -> tuple[np.ndarray, np.ndarray]:
    """Rows to compare against the net, plus a mask of usable rows."""
    if isinstance(points, np.ndarray):
        vecs = np.atleast_2d(points)
    elif mode is CoverageMode.PLAIN:
        vecs = np.array([p.vector() for p in points])
    else:
        vecs = np.array([p.unit for p in points])
    if mode is CoverageMode.PLAIN:
        return vecs, np.ones(len(vecs), dtype=bool)
    norms = np.linalg.norm(vecs, axis=1)
    valid = norms > 0
    return vecs / np.where(valid, norms, 1.0)[:, None], valid


def coverage(
    orbit_points: Sequence[OrbitPoint] | np.ndarray,
    net: np.ndarray,
    epsilon: float,
    mode: CoverageMode | str,
    seed: int | None = None,
) -> CoverageReport:
    """Fraction of net points within epsilon of the orbit under `mode`.

    Zero orbit vectors are skipped in the quotient modes and counted.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    mode = CoverageMode(mode)
    net = np.atleast_2d(np.asarray(net))
    if mode is not CoverageMode.PLAIN:
        net = net / np.linalg.norm(net, axis=1, keepdims=True)
    vecs, valid = _orbit_matrix(orbit_points, mode)
    skipped = int((~valid).sum())
    if skipped:
        logger.warning(f"skipping {skipped} zero orbit vectors in {mode}")
    first = _first_hits(vecs, valid, net, epsilon, mode)
    curve = _curve(first, len(vecs), len(net))
    return CoverageReport(
        net_size=len(net),
        epsilon=epsilon,
        mode=mode,
        fraction=curve[-1] if curve else 0.0,
        curve=curve,
        seed=seed,
        skipped=skipped,
    )


def coupled_orbit(
    model: OperatorModel, x: np.ndarray, g: TorusPoint, n: int
) -> list[tuple[OrbitPoint, TorusPoint]]:
    """Pairs (T^k x, g^k); the torus side is exact for exact g."""
    return [(p, g * k) for k, p in enumerate(orbit(model, x, n))]


def _torus_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Wrap-around sup distances, shape (len(b), len(a))."""
    d = np.abs(b[:, None, :] - a[None, :, :]) % 1.0
    return np.minimum(d, 1.0 - d).max(axis=2)


def _angles(points: Sequence[TorusPoint]) -> np.ndarray:
    return np.array([p.as_floats() for p in points], dtype=float)


def coupled_coverage(
    pairs: Sequence[tuple[OrbitPoint, TorusPoint]],
    net_pairs: Sequence[tuple[np.ndarray, TorusPoint]],
    epsilon: float,
    mode: CoverageMode | str,
    seed: int | None = None,
) -> CoverageReport:
    """Coverage of a net in X x G under max(mode distance, torus distance)."""
    mode = CoverageMode(mode)
    points = [p for p, _ in pairs]
    vecs, valid = _orbit_matrix(points, mode)
    net = np.array([np.asarray(y) for y, _ in net_pairs])
    if mode is not CoverageMode.PLAIN:
        net = net / np.linalg.norm(net, axis=1, keepdims=True)
    torus = (
        _angles([h for _, h in pairs]),
        _angles([h for _, h in net_pairs]),
    )
    first = _first_hits(vecs, valid, net, epsilon, mode, torus=torus)
    curve = _curve(first, len(vecs), len(net))
    return CoverageReport(
        net_size=len(net),
        epsilon=epsilon,
        mode=mode,
        fraction=curve[-1] if curve else 0.0,
        curve=curve,
        seed=seed,
        skipped=int((~valid).sum()),
    )


@dataclass(frozen=True)
class FinitePowerReport:
    """Coupled orbit with g = 1/q against the subsequence of T^q powers."""

    q: int
    cosets: CosetEstimate
    full_fraction: float
    power_fraction: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "q": self.q,
            "cosets": self.cosets.to_dict(),
            "full_fraction": self.full_fraction,
            "power_fraction": self.power_fraction,
        }


def finite_power_experiment(
    model: OperatorModel,
    x: np.ndarray,
    q: int,
    n: int,
    net: np.ndarray,
    epsilon: float,
    mode: str = "plain",
) -> FinitePowerReport:
    """Cosets of the coupled orbit in X x Z_q, and how much of the net
    O(T^q, x) reaches compared with O(T, x)."""
    if q < 1:
        raise PreconditionError(f"q must be positive, got {q}")
    cmode = CoverageMode(mode)
    g = TorusPoint.exact(Fraction(1, q))
    pairs = coupled_orbit(model, x, g, n)
    samples = [
        (p.vector() if cmode is CoverageMode.PLAIN else p.unit, h)
        for p, h in pairs
        if not p.is_zero
    ]
    cosets = estimate_cosets(
        samples, x, net, epsilon, closure_of_powers(g), mode=cmode.value
    )
    points = [p for p, _ in pairs]
    full = coverage(points, net, epsilon, cmode)
    sub = coverage(points[::q], net, epsilon, cmode)
    logger.info(
        f"T^{q} subsequence covers {sub.fraction:.4f} of the net, "
        f"T covers {full.fraction:.4f}"
    )
    return FinitePowerReport(
        q=q,
        cosets=cosets,
        full_fraction=full.fraction,
        power_fraction=sub.fraction,
    )
