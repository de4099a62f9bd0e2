"""
Points of the torus T^k = (R/Z)^k in turns, the closed subgroup generated
by one point, and coset recovery for finite cyclic groups.
"""

import itertools
import logging
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Sequence

import numpy as np

from orbitbox.base import (
    DEFAULT_MAX_DENOMINATOR,
    DEFAULT_RELATION_BOUND,
    CoverageMode,
    EmptySampleError,
    PreconditionError,
    RelationSearchError,
    distance,
)

logger = logging.getLogger(__name__)

EPS = sys.float_info.epsilon
MAX_APPROX_RANK = 4


@dataclass(frozen=True)
class ApproxAngle:
    """A float angle in [0, 1) turns with an absolute uncertainty."""

    value: float
    uncertainty: float = 4 * EPS

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value) % 1.0)


Angle = Fraction | ApproxAngle


def _reduce(a: Angle) -> Angle:
    if isinstance(a, Fraction):
        return a % 1
    return a


def _as_float(a: Angle) -> float:
    return float(a) if isinstance(a, Fraction) else a.value


def _uncertainty(a: Angle) -> float:
    return 0.0 if isinstance(a, Fraction) else a.uncertainty


@dataclass(frozen=True)
class TorusPoint:
    coords: tuple[Angle, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "coords", tuple(_reduce(c) for c in self.coords)
        )

    @classmethod
    def exact(cls, *angles: Fraction | int | str) -> "TorusPoint":
        return cls(tuple(Fraction(a) for a in angles))

    @classmethod
    def approx(
        cls, *values: float, uncertainty: float = 4 * EPS
    ) -> "TorusPoint":
        return cls(tuple(ApproxAngle(v, uncertainty) for v in values))

    @classmethod
    def identity(cls, k: int = 1) -> "TorusPoint":
        return cls(tuple(Fraction(0) for _ in range(k)))

    @classmethod
    def from_complex(cls, *zs: complex) -> "TorusPoint":
        """Phases of nonzero complex numbers.

        Axis-aligned values (real or purely imaginary) have exact phases;
        everything else is approximate.
        """
        coords: list[Angle] = []
        for z in zs:
            z = complex(z)
            if z == 0:
                raise PreconditionError("zero has no phase")
            if z.imag == 0:
                coords.append(Fraction(0 if z.real > 0 else 1, 2))
            elif z.real == 0:
                coords.append(Fraction(1 if z.imag > 0 else 3, 4))
            else:
                turns = math.atan2(z.imag, z.real) / (2 * math.pi)
                coords.append(ApproxAngle(turns, 8 * EPS))
        return cls(tuple(coords))

    @property
    def k(self) -> int:
        return len(self.coords)

    @property
    def is_exact(self) -> bool:
        return all(isinstance(c, Fraction) for c in self.coords)

    def as_floats(self) -> np.ndarray:
        return np.array([_as_float(c) for c in self.coords])

    def __add__(self, other: "TorusPoint") -> "TorusPoint":
        if self.k != other.k:
            raise ValueError(f"adding points of T^{self.k} and T^{other.k}")
        out: list[Angle] = []
        for a, b in zip(self.coords, other.coords):
            if isinstance(a, Fraction) and isinstance(b, Fraction):
                out.append(a + b)
            else:
                out.append(
                    ApproxAngle(
                        _as_float(a) + _as_float(b),
                        _uncertainty(a) + _uncertainty(b),
                    )
                )
        return TorusPoint(tuple(out))

    def __neg__(self) -> "TorusPoint":
        return self * -1

    def __sub__(self, other: "TorusPoint") -> "TorusPoint":
        return self + (-other)

    def __mul__(self, n: int) -> "TorusPoint":
        """n-th power in multiplicative notation, i.e. n * theta mod 1."""
        out: list[Angle] = []
        for a in self.coords:
            if isinstance(a, Fraction):
                out.append(a * n)
            else:
                frac = math.fmod(a.value * n, 1.0)
                out.append(
                    ApproxAngle(frac, a.uncertainty * max(1, abs(n)))
                )
        return TorusPoint(tuple(out))

    __rmul__ = __mul__
    power = __mul__

    def distance(self, other: "TorusPoint") -> float:
        """Max over coordinates of the circular distance in turns."""
        d = 0.0
        for a, b in zip(self.coords, other.coords):
            if isinstance(a, Fraction) and isinstance(b, Fraction):
                diff = float((a - b) % 1)
            else:
                diff = (_as_float(a) - _as_float(b)) % 1.0
            d = max(d, min(diff, 1.0 - diff))
        return d

    def to_dict(self) -> dict[str, Any]:
        return {
            "coords": [
                (
                    {"exact": f"{c.numerator}/{c.denominator}"}
                    if isinstance(c, Fraction)
                    else {"value": c.value, "uncertainty": c.uncertainty}
                )
                for c in self.coords
            ]
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TorusPoint":
        coords: list[Angle] = []
        for c in d["coords"]:
            if "exact" in c:
                coords.append(Fraction(c["exact"]))
            else:
                coords.append(
                    ApproxAngle(c["value"], c.get("uncertainty", 4 * EPS))
                )
        return cls(tuple(coords))


def continued_fraction_convergents(
    value: float | Fraction, max_denominator: int
) -> list[Fraction]:
    """Convergents p/q of the exact binary value with q <= Q."""
    x = Fraction(value)
    out: list[Fraction] = []
    p0, q0, p1, q1 = 0, 1, 1, 0
    while True:
        a = math.floor(x)
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        if q1 > max_denominator:
            break
        out.append(Fraction(p1, q1))
        if x == a:
            break
        x = 1 / (x - a)
    return out


def _rational_order(
    a: ApproxAngle, max_denominator: int
) -> tuple[int, Fraction] | None:
    """Smallest q <= Q with q*a within tolerance of an integer."""
    tol = max(a.uncertainty, 4 * EPS)
    for c in continued_fraction_convergents(a.value, max_denominator):
        if abs(a.value - float(c)) <= tol:
            return c.denominator, c % 1
    return None


@dataclass(frozen=True)
class SubgroupDescriptor:
    """Closure of {g^n} in T^k."""

    finite: bool
    generator: TorusPoint
    order: int | None = None
    relations: tuple[tuple[int, ...], ...] = ()
    identity_dim: int = 0
    exact: bool = True
    bounds: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "bounds", dict(self.bounds))

    @property
    def certainty(self) -> str:
        if self.exact:
            return "exact"
        return "up_to_" + "_".join(
            f"{k}={v}" for k, v in sorted(self.bounds.items())
        )

    def elements(self) -> list[TorusPoint]:
        if not self.finite or self.order is None:
            raise PreconditionError("only finite groups can be enumerated")
        return [self.generator * n for n in range(self.order)]

    def contains(self, p: TorusPoint, tol: float = 1e-9) -> bool:
        if self.finite and self.exact and p.is_exact:
            if self.generator.k == 1:
                return (p.coords[0] * self.order) % 1 == 0
            return p in set(self.elements())
        if self.finite:
            return any(
                p.distance(h) <= tol for h in self.elements()
            )
        theta = p.as_floats()
        for m in self.relations:
            r = float(np.dot(m, theta))
            if abs(r - round(r)) > tol * max(1, sum(map(abs, m))):
                return False
        return True

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "finite": self.finite,
            "exact": self.exact,
            "certainty": self.certainty,
            "bounds": dict(self.bounds),
            "generator": self.generator.to_dict(),
        }
        if self.finite:
            d["order"] = self.order
        else:
            d["relations"] = [list(m) for m in self.relations]
            d["identity_dim"] = self.identity_dim
        return d


def _exact_order(z: TorusPoint) -> int:
    return math.lcm(*[c.denominator for c in z.coords])  # type: ignore


def _independent_relations(
    candidates: Sequence[tuple[int, ...]], k: int
) -> list[tuple[int, ...]]:
    chosen: list[tuple[int, ...]] = []
    for m in candidates:
        trial = np.array([*chosen, m], dtype=float)
        if np.linalg.matrix_rank(trial) > len(chosen):
            chosen.append(m)
            if len(chosen) == k:
                break
    return chosen


def _relation_search(
    z: TorusPoint, bound: int
) -> list[tuple[int, ...]]:
    """All sign-normalized m with |m|_inf <= M and m.theta ~ 0 mod 1."""
    k = z.k
    theta = z.as_floats()
    unc = np.array([max(_uncertainty(c), 4 * EPS) for c in z.coords])
    grid = np.array(
        list(itertools.product(range(-bound, bound + 1), repeat=k)),
        dtype=np.int64,
    )
    # first nonzero entry positive
    nz = grid != 0
    first = np.argmax(nz, axis=1)
    lead = grid[np.arange(len(grid)), first]
    grid = grid[nz.any(axis=1) & (lead > 0)]
    r = grid @ theta
    resid = np.abs(r - np.round(r))
    tol = np.abs(grid) @ unc
    hits = grid[resid <= tol]
    order = np.lexsort((np.abs(hits).sum(axis=1), np.abs(hits).max(axis=1)))
    return [tuple(int(v) for v in hits[i]) for i in order]


def closure_of_powers(
    z: TorusPoint,
    max_denominator: int = DEFAULT_MAX_DENOMINATOR,
    relation_bound: int = DEFAULT_RELATION_BOUND,
) -> SubgroupDescriptor:
    if z.is_exact:
        return SubgroupDescriptor(
            finite=True, generator=z, order=_exact_order(z), exact=True
        )

    if z.k == 1:
        bounds = {"Q": max_denominator}
        a = z.coords[0]
        assert isinstance(a, ApproxAngle)
        found = _rational_order(a, max_denominator)
        if found is not None:
            q, _ = found
            logger.debug(f"{a.value!r} looks rational with denominator {q}")
            return SubgroupDescriptor(
                finite=True,
                generator=z,
                order=q,
                relations=((q,),),
                exact=False,
                bounds=bounds,
            )
        return SubgroupDescriptor(
            finite=False,
            generator=z,
            identity_dim=1,
            exact=False,
            bounds=bounds,
        )

    if z.k > MAX_APPROX_RANK:
        raise RelationSearchError(
            f"exhaustive relation search is limited to k <= "
            f"{MAX_APPROX_RANK}, got k = {z.k}"
        )
    bounds = {"M": relation_bound, "Q": max_denominator}
    relations = _independent_relations(
        _relation_search(z, relation_bound), z.k
    )
    if len(relations) == z.k:
        # full-rank relation lattice: every coordinate is rational
        orders = []
        for c in z.coords:
            if isinstance(c, Fraction):
                orders.append(c.denominator)
                continue
            found = _rational_order(c, max_denominator)
            if found is None:
                break
            orders.append(found[0])
        else:
            return SubgroupDescriptor(
                finite=True,
                generator=z,
                order=math.lcm(*orders),
                relations=tuple(relations),
                exact=False,
                bounds=bounds,
            )
    return SubgroupDescriptor(
        finite=False,
        generator=z,
        relations=tuple(relations),
        identity_dim=z.k - len(relations),
        exact=False,
        bounds=bounds,
    )


@dataclass(frozen=True)
class GeneratorVerdict:
    generator: bool
    certainty: str
    order: int | None
    max_denominator: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "generator": self.generator,
            "certainty": self.certainty,
            "order": self.order,
            "Q": self.max_denominator,
        }


def is_generator(
    z: TorusPoint, max_denominator: int = DEFAULT_MAX_DENOMINATOR
) -> GeneratorVerdict:
    """Whether {z^n} is dense in T (k = 1 only)."""
    if z.k != 1:
        raise PreconditionError(f"is_generator needs k = 1, got {z.k}")
    desc = closure_of_powers(z, max_denominator)
    certainty = "exact" if desc.exact else "up_to_Q"
    return GeneratorVerdict(
        generator=not desc.finite,
        certainty=certainty,
        order=desc.order,
        max_denominator=max_denominator,
    )


def brute_force_powers(
    z: TorusPoint, limit: int = 10**5
) -> list[TorusPoint]:
    """Enumerate z^0, z^1, ... until the first repeat (exact points)."""
    if not z.is_exact:
        raise PreconditionError("brute-force enumeration needs exact input")
    seen = [TorusPoint.identity(z.k)]
    p = z
    while p != seen[0]:
        seen.append(p)
        p = p + z
        if len(seen) > limit:
            raise RelationSearchError(f"no repeat within {limit} powers")
    return seen


@dataclass(frozen=True)
class TorusCoverage:
    fraction: float
    epsilon: float
    orbit_length: int
    net_size: int
    seed: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "fraction": self.fraction,
            "epsilon": self.epsilon,
            "orbit_length": self.orbit_length,
            "net_size": self.net_size,
            "seed": self.seed,
        }


def power_coverage(
    z: TorusPoint, n: int, net_size: int, epsilon: float, seed: int
) -> TorusCoverage:
    """Fraction of a seeded uniform net within epsilon of {z^j : j < n}."""
    rng = np.random.default_rng(seed)
    net = rng.random((net_size, z.k))
    theta = z.as_floats()
    # j * theta mod 1 accumulates less error than repeated addition
    j = np.arange(n, dtype=float)[:, None]
    orbit = np.mod(j * theta, 1.0)
    if z.k == 1:
        pts = np.sort(orbit[:, 0])
        ring = np.concatenate([pts - 1.0, pts, pts + 1.0])
        idx = np.searchsorted(ring, net[:, 0])
        lo = np.abs(net[:, 0] - ring[np.maximum(idx - 1, 0)])
        hi = np.abs(ring[np.minimum(idx, len(ring) - 1)] - net[:, 0])
        hit = np.minimum(lo, hi) <= epsilon
    else:
        hit = np.zeros(net_size, dtype=bool)
        for start in range(0, n, 256):
            d = np.abs(net[:, None, :] - orbit[None, start : start + 256])
            d = np.minimum(d, 1.0 - d).max(axis=2)
            hit |= (d <= epsilon).any(axis=1)
    return TorusCoverage(
        fraction=float(hit.mean()),
        epsilon=epsilon,
        orbit_length=n,
        net_size=net_size,
        seed=seed,
    )


@dataclass(frozen=True)
class CosetEstimate:
    """F_{x,y} per net point, with H = F_{x,x}."""

    sets: dict[int, frozenset[TorusPoint]]
    subgroup: frozenset[TorusPoint]
    subgroup_closed: bool
    consistent: bool

    def to_dict(self) -> dict[str, Any]:
        def fmt(s: Iterable[TorusPoint]) -> list[str]:
            return sorted(
                ",".join(str(c) for c in h.coords) for h in s
            )

        return {
            "subgroup": fmt(self.subgroup),
            "subgroup_closed": self.subgroup_closed,
            "consistent": self.consistent,
            "sets": {str(i): fmt(s) for i, s in sorted(self.sets.items())},
        }


def _is_coset(s: frozenset[TorusPoint], h: frozenset[TorusPoint]) -> bool:
    base = min(s, key=lambda p: tuple(p.coords))
    return frozenset(p - base for p in s) == h


def estimate_cosets(
    pair_samples: Sequence[tuple[np.ndarray, TorusPoint]],
    x: np.ndarray,
    net: Sequence[np.ndarray] | np.ndarray,
    epsilon: float,
    group: SubgroupDescriptor,
    mode: str = "plain",
) -> CosetEstimate:
    """Recover the sets F_{x,y} from a finite coupled orbit.

    Sampled sets are lower bounds for the true closures.
    """
    if not pair_samples:
        raise EmptySampleError("no coupled samples")
    if not group.finite:
        raise PreconditionError("coset estimation needs a finite group")
    if not all(h.is_exact for _, h in pair_samples):
        raise PreconditionError("group components must be exact")
    cmode = CoverageMode(mode)

    def hits(y: np.ndarray) -> frozenset[TorusPoint]:
        return frozenset(
            h for v, h in pair_samples if distance(v, y, cmode) <= epsilon
        )

    sets = {i: hits(np.asarray(y)) for i, y in enumerate(net)}
    h_set = hits(np.asarray(x))
    closed = bool(h_set) and all(a + b in h_set for a in h_set for b in h_set)
    consistent = closed and all(
        _is_coset(s, h_set) for s in sets.values() if s
    )
    logger.info(
        f"coset estimate: |H|={len(h_set)}, "
        f"{sum(1 for s in sets.values() if s)}/{len(sets)} net points hit, "
        f"consistent={consistent}"
    )
    return CosetEstimate(
        sets=sets,
        subgroup=h_set,
        subgroup_closed=closed,
        consistent=consistent,
    )
