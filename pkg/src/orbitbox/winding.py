"""
Winding numbers of sampled circle-valued paths.

Angles are in turns. A path is only accepted when every pair of adjacent
samples is less than half a turn apart, so the lift is unambiguous.
"""

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

from orbitbox.base import (
    CLOSED_PATH_TOL,
    WINDING_SNAP_TOL,
    EndpointMismatchError,
    InsufficientSamplingError,
    MarginViolationError,
    NonMonotoneError,
    PreconditionError,
)

logger = logging.getLogger(__name__)


def _circ(a: np.ndarray | float) -> np.ndarray | float:
    """Circular distance to 0 in turns."""
    r = np.mod(a, 1.0)
    return np.minimum(r, 1.0 - r)


@dataclass(frozen=True)
class SampledPath:
    times: np.ndarray = field(compare=False)
    angles: np.ndarray = field(compare=False)
    closed: bool = False

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        a = np.asarray(self.angles, dtype=float)
        if t.ndim != 1 or t.shape != a.shape or len(t) < 2:
            raise ValueError(
                "need matching 1-d times and angles, length >= 2"
            )
        if np.any(np.diff(t) <= 0):
            raise NonMonotoneError("sample times must strictly increase")
        if self.closed and _circ(a[-1] - a[0]) > CLOSED_PATH_TOL:
            raise EndpointMismatchError(
                f"closed path ends {_circ(a[-1] - a[0]):.3g} turns from "
                "where it starts"
            )
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "angles", a)

    @classmethod
    def from_function(
        cls, f, t0: float, t1: float, samples: int, closed: bool = False
    ) -> "SampledPath":
        """Sample an angle-valued function (turns) on a uniform grid."""
        t = np.linspace(t0, t1, samples)
        return cls(t, np.asarray([f(s) for s in t], dtype=float), closed)

    @property
    def start(self) -> float:
        return float(self.angles[0])

    @property
    def end(self) -> float:
        return float(self.angles[-1])

    def steps(self) -> np.ndarray:
        """Adjacent steps wrapped into [-1/2, 1/2]."""
        d = np.diff(self.angles)
        return d - np.round(d)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "angle"])
        for t, a in zip(self.times, self.angles):
            w.writerow([repr(float(t)), repr(float(a))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, closed: bool = False) -> "SampledPath":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(
            np.array([float(r["t"]) for r in rows]),
            np.array([float(r["angle"]) for r in rows]),
            closed,
        )


def _checked_steps(p: SampledPath) -> np.ndarray:
    s = p.steps()
    bad = np.flatnonzero(np.abs(s) >= 0.5)
    if bad.size:
        i = int(bad[0])
        raise InsufficientSamplingError(
            f"samples {i} and {i + 1} (t={p.times[i]:.6g}) are half a turn "
            "apart; refine the sampling"
        )
    return s


def winding_with_flag(p: SampledPath) -> tuple[float, bool]:
    """Total turn count and whether it was snapped to an integer."""
    total = math.fsum(_checked_steps(p))
    if p.closed:
        k = round(total)
        if abs(total - k) <= WINDING_SNAP_TOL:
            return float(k), True
        logger.warning(
            f"closed path winds {total!r} turns, not within "
            f"{WINDING_SNAP_TOL} of an integer"
        )
    return total, False


def winding(p: SampledPath) -> float:
    return winding_with_flag(p)[0]


def lift(p: SampledPath) -> np.ndarray:
    """Continuous lift starting at the first stored angle."""
    s = _checked_steps(p)
    return p.start + np.concatenate([[0.0], np.cumsum(s)])


def concatenate(p: SampledPath, q: SampledPath) -> SampledPath:
    """p followed by q; q is shifted in time to start where p ends."""
    gap = q.start - p.end
    if _circ(gap) > CLOSED_PATH_TOL:
        raise EndpointMismatchError(
            f"p ends at {p.end!r} but q starts at {q.start!r}"
        )
    times = np.concatenate([p.times, q.times[1:] - q.times[0] + p.times[-1]])
    angles = np.concatenate([p.angles, q.angles[1:] - round(gap)])
    closed = bool(_circ(angles[-1] - angles[0]) <= CLOSED_PATH_TOL)
    return SampledPath(times, angles, closed)


def reparametrize(
    p: SampledPath, new_times: np.ndarray, mapped_times: np.ndarray
) -> SampledPath:
    """p composed with a monotone h, given as samples h(new_times).

    h must map the new interval onto p's interval, endpoints included.
    """
    new_times = np.asarray(new_times, dtype=float)
    mapped = np.asarray(mapped_times, dtype=float)
    if new_times.shape != mapped.shape:
        raise ValueError("new_times and mapped_times differ in length")
    if np.any(np.diff(mapped) < 0):
        raise NonMonotoneError("reparametrization must be nondecreasing")
    t0, t1 = p.times[0], p.times[-1]
    if abs(mapped[0] - t0) > 1e-12 or abs(mapped[-1] - t1) > 1e-12:
        raise EndpointMismatchError(
            f"h maps onto [{mapped[0]}, {mapped[-1]}], not [{t0}, {t1}]"
        )
    values = np.interp(np.clip(mapped, t0, t1), p.times, lift(p))
    return SampledPath(new_times, values, p.closed)


def scale(u: float | complex, p: SampledPath) -> SampledPath:
    """u * p for unimodular u, given as turns or as a complex number."""
    if isinstance(u, complex):
        if abs(abs(u) - 1.0) > 1e-12:
            raise PreconditionError(f"|u| = {abs(u)} is not 1")
        u = math.atan2(u.imag, u.real) / (2 * math.pi)
    return SampledPath(p.times, p.angles + float(u), p.closed)


def _arc_contains(a: np.ndarray, s: np.ndarray, z0: float) -> np.ndarray:
    forward = np.mod(z0 - a, 1.0) <= s
    backward = np.mod(a - z0, 1.0) <= -s
    return np.where(s >= 0, forward, backward)


def omit_point_bound_check(
    p: SampledPath, z0: float, margin: float = 1e-6
) -> bool:
    """|w(p)| < 1 for a path that stays away from the point z0 (turns)."""
    s = _checked_steps(p)
    a = p.angles[:-1]
    near = np.minimum(_circ(p.angles[:-1] - z0), _circ(p.angles[1:] - z0))
    inside = _arc_contains(a, s, z0)
    if np.any(inside) or np.any(near < margin):
        i = int(np.flatnonzero(inside | (near < margin))[0])
        raise MarginViolationError(
            f"segment {i} passes within {margin} turns of {z0}"
        )
    return abs(winding(p)) < 1


def random_path(
    rng: np.random.Generator,
    samples: int,
    max_step: float = 0.4,
    closed: bool = False,
) -> SampledPath:
    """Random walk on the circle with steps below max_step turns."""
    times = np.concatenate(
        [[0.0], np.sort(rng.uniform(0.0, 1.0, samples - 2)), [1.0]]
    )
    steps = rng.uniform(-max_step, max_step, samples - 1)
    start = rng.uniform(0.0, 1.0)
    if closed:
        total = steps.sum()
        steps += (round(total) - total) / len(steps)
    angles = start + np.concatenate([[0.0], np.cumsum(steps)])
    if closed:
        angles[-1] = start + round(float(steps.sum()))
    return SampledPath(times, angles, closed)


def random_avoiding_path(
    rng: np.random.Generator,
    z0: float,
    samples: int,
    margin: float = 1e-3,
    max_step: float = 0.2,
) -> SampledPath:
    """Random walk reflected off the arc around z0 it may not enter."""
    lo, hi = z0 + 2 * margin, z0 + 1.0 - 2 * margin
    angles = np.empty(samples)
    angles[0] = rng.uniform(lo, hi)
    for i in range(1, samples):
        a = angles[i - 1] + rng.uniform(-max_step, max_step)
        if a < lo:
            a = 2 * lo - a
        elif a > hi:
            a = 2 * hi - a
        angles[i] = min(max(a, lo), hi)
    times = np.linspace(0.0, 1.0, samples)
    return SampledPath(times, angles)


@dataclass(frozen=True)
class LemmaMapReport:
    z_turns: float
    m: int
    w_beta: float
    segments: tuple[float, ...]
    sum_mid: float
    bound_ok: bool

    @property
    def residual(self) -> float:
        return abs(self.sum_mid - self.m * self.w_beta)

    def to_dict(self) -> dict[str, Any]:
        return {
            "z_turns": self.z_turns,
            "m": self.m,
            "w_beta": self.w_beta,
            "segments": list(self.segments),
            "sum_mid": self.sum_mid,
            "bound_ok": self.bound_ok,
            "residual": self.residual,
        }


def lemma_map_demo(
    z_turns: float | Fraction, m: int, samples: int = 64
) -> LemmaMapReport:
    """Winding arithmetic of the path built from an orbit under T = z.

    beta is the image under v -> v/|v| of a path from x = 1 to Tx = z that
    avoids 0: the arc exp(2 pi i s theta) with theta the principal phase
    of z in (-1/2, 1/2]. Each middle piece is beta rotated by z^j, so the
    middle section winds m * w(beta) turns.
    """
    theta = float(Fraction(z_turns) % 1)
    if theta == 0.0:
        raise PreconditionError("z = 1 fixes x; there is no path to wind")
    if theta > 0.5:
        theta -= 1.0
    if samples < 3:
        raise PreconditionError("need at least 3 samples per segment")
    if m < 1 or m * abs(theta) <= 2:
        raise PreconditionError(
            f"m * |w(beta)| = {m * abs(theta)!r} must exceed 2"
        )
    s = np.linspace(0.0, 1.0, samples)
    beta = SampledPath(s, s * theta)
    w_beta = winding(beta)

    pieces = [scale(j * theta, beta) for j in range(1, m + 1)]
    middle = pieces[0]
    for piece in pieces[1:]:
        middle = concatenate(middle, piece)
    sum_mid = winding(middle)
    logger.info(
        f"lemma map: w(beta)={w_beta!r}, m={m}, middle section {sum_mid!r}"
    )
    return LemmaMapReport(
        z_turns=float(z_turns),
        m=m,
        w_beta=w_beta,
        segments=tuple(winding(p) for p in pieces),
        sum_mid=sum_mid,
        bound_ok=abs(sum_mid) > 2,
    )
