"""
Log-domain evaluation of the binomial sums behind the norm growth of
S = I + T_w, with w_k = exp(-2k), on the unit-sequence-type vectors.

    A_n = sum_k C(n,k) (k+1)^-1 exp(-k(k+1))
    B_n = sum_k C(n,k) exp(-(k+1)(k+2))

Nothing here is exponentiated until the very end; terms span thousands
of orders of magnitude.
"""

import csv
import functools
import io
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from orbitbox.base import PreconditionError

logger = logging.getLogger(__name__)


@functools.total_ordering
@dataclass(frozen=True)
class LogValue:
    """sign * exp(log); zero is (0, -inf)."""

    sign: int
    log: float

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign}")
        if self.sign == 0 or self.log == -math.inf:
            object.__setattr__(self, "sign", 0)
            object.__setattr__(self, "log", -math.inf)

    @classmethod
    def zero(cls) -> "LogValue":
        return cls(0, -math.inf)

    @classmethod
    def from_float(cls, x: float) -> "LogValue":
        if x == 0:
            return cls.zero()
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    @classmethod
    def sum(cls, signs: np.ndarray, logs: np.ndarray) -> "LogValue":
        """Signed log-sum-exp with separate positive and negative parts."""
        signs, logs = np.asarray(signs), np.asarray(logs, dtype=float)
        pos, neg = logs[signs > 0], logs[signs < 0]
        lp = float(logsumexp(pos)) if pos.size else -math.inf
        ln = float(logsumexp(neg)) if neg.size else -math.inf
        return cls(1, lp) - cls(1, ln)

    def to_float(self) -> float:
        if self.sign == 0:
            return 0.0
        try:
            return self.sign * math.exp(self.log)
        except OverflowError:
            return self.sign * math.inf

    def __neg__(self) -> "LogValue":
        return LogValue(-self.sign, self.log)

    def __add__(self, other: "LogValue") -> "LogValue":
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        big, small = (self, other) if self.log >= other.log else (other, self)
        if big.sign == small.sign:
            return LogValue(big.sign, float(np.logaddexp(big.log, small.log)))
        if big.log == small.log:
            return LogValue.zero()
        return LogValue(
            big.sign, big.log + math.log1p(-math.exp(small.log - big.log))
        )

    def __sub__(self, other: "LogValue") -> "LogValue":
        return self + (-other)

    def __mul__(self, other: "LogValue") -> "LogValue":
        if self.sign == 0 or other.sign == 0:
            return LogValue.zero()
        return LogValue(self.sign * other.sign, self.log + other.log)

    def __lt__(self, other: "LogValue") -> bool:
        if self.sign != other.sign:
            return self.sign < other.sign
        if self.sign == 0:
            return False
        if self.sign > 0:
            return self.log < other.log
        return self.log > other.log

    def to_dict(self) -> dict[str, Any]:
        return {"sign": self.sign, "log": self.log}


def log_binomial(n: int, k: int) -> float:
    """ln C(n, k)."""
    if not 0 <= k <= n:
        raise PreconditionError(f"need 0 <= k <= n, got n={n}, k={k}")
    if n <= 60:
        return math.log(math.comb(n, k))
    kk = min(k, n - k)
    if kk <= 2000:
        return math.fsum(
            math.log(n - i) - math.log(i + 1) for i in range(kk)
        )
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def _log_binomial_row(n: int, kmax: int) -> np.ndarray:
    """ln C(n, k) for k = 0..kmax, kmax <= n."""
    i = np.arange(kmax, dtype=float)
    steps = np.log(n - i) - np.log1p(i)
    return np.concatenate([[0.0], np.cumsum(steps)])


def _term_limit(n: int) -> int:
    # past here each term is below exp(-40) times the previous one
    return min(n, int(2 * math.log(n + 1)) + 40)


SequenceRule = Callable[[np.ndarray], np.ndarray]

SEQUENCE_RULES: dict[str, SequenceRule] = {
    "reciprocal": lambda k: 1.0 / (k + 1.0),
    "alternating": lambda k: np.where(k % 2 == 0, 1.0, -1.0),
    "unit": lambda k: np.ones_like(k, dtype=float),
}


def _sequence(y: str | SequenceRule | Sequence[float]) -> SequenceRule:
    if isinstance(y, str):
        if y not in SEQUENCE_RULES:
            raise PreconditionError(
                f"unknown sequence rule {y!r}, expected one of "
                f"{sorted(SEQUENCE_RULES)}"
            )
        return SEQUENCE_RULES[y]
    if callable(y):
        return y
    values = np.asarray(y, dtype=float)

    def finite(k: np.ndarray) -> np.ndarray:
        out = np.zeros(k.shape)
        inside = k < len(values)
        out[inside] = values[k[inside]]
        return out

    return finite


def sn_coordinate(
    y: str | SequenceRule | Sequence[float], j: int, n: int
) -> LogValue:
    """(S^n y)_j = sum_k C(n,k) exp(-k(k+1) - 2jk) y_{j+k}.

    At j = 0 the weight is exp(-k(k+1)).
    """
    if n < 0 or j < 0:
        raise PreconditionError(f"need n, j >= 0, got n={n}, j={j}")
    rule = _sequence(y)
    kmax = _term_limit(n)
    k = np.arange(kmax + 1)
    vals = np.asarray(rule(j + k), dtype=float)
    # w_{j+1} ... w_{j+k} with w_i = e^{-2i}
    with np.errstate(divide="ignore"):
        logs = (
            _log_binomial_row(n, kmax)
            - k * (k + 1.0)
            - 2.0 * j * k
            + np.log(np.abs(vals))
        )
    return LogValue.sum(np.sign(vals), logs)


def a_n(n: int) -> LogValue:
    return sn_coordinate("reciprocal", 0, n)


def b_n(n: int) -> LogValue:
    if n < 0:
        raise PreconditionError(f"need n >= 0, got {n}")
    kmax = _term_limit(n)
    k = np.arange(kmax + 1)
    logs = _log_binomial_row(n, kmax) - (k + 1.0) * (k + 2.0)
    return LogValue.sum(np.ones_like(logs), logs)


def normalized_exponent(n: int) -> float:
    """ln A_n / (ln n)^2, which creeps up towards 1/4."""
    if n < 2:
        raise PreconditionError(f"need n >= 2, got {n}")
    return a_n(n).log / math.log(n) ** 2


def stirling_band_check(
    n: int, k_max: int | None = None
) -> tuple[float, float]:
    """min and max over 1 <= k <= k_max of the A_n term divided by
    k^-3/2 (n/k e^-k)^k."""
    if n < 4:
        raise PreconditionError(f"need n >= 4, got {n}")
    kmax = math.isqrt(n) if k_max is None else k_max
    if not 1 <= kmax <= n:
        raise PreconditionError(f"k_max must lie in [1, {n}], got {kmax}")
    k = np.arange(1, kmax + 1, dtype=float)
    term = _log_binomial_row(n, kmax)[1:] - np.log1p(k) - k * (k + 1)
    model = -1.5 * np.log(k) + k * (math.log(n) - np.log(k) - k)
    ratio = term - model
    return math.exp(float(ratio.min())), math.exp(float(ratio.max()))


@dataclass(frozen=True)
class StirlingBand:
    ns: tuple[int, ...]
    alphas: tuple[float, ...]
    betas: tuple[float, ...]

    @property
    def drift(self) -> float:
        """Largest factor by which either band edge moves across ns."""
        return max(
            max(self.alphas) / min(self.alphas),
            max(self.betas) / min(self.betas),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "ns": list(self.ns),
            "alpha_hat": list(self.alphas),
            "beta_hat": list(self.betas),
            "drift": self.drift,
        }


def stirling_band_sweep(ns: Sequence[int]) -> StirlingBand:
    bands = [stirling_band_check(n) for n in ns]
    return StirlingBand(
        ns=tuple(ns),
        alphas=tuple(a for a, _ in bands),
        betas=tuple(b for _, b in bands),
    )


@dataclass(frozen=True)
class DivergenceRow:
    n: int
    a: LogValue
    b: LogValue
    bound: LogValue

    @property
    def ratio(self) -> float:
        return math.exp(self.b.log - self.a.log)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "log_a": self.a.log,
            "log_b": self.b.log,
            "ratio": self.ratio,
            "bound": self.bound.to_dict(),
            "normalized_exponent": (
                self.a.log / math.log(self.n) ** 2 if self.n >= 2 else None
            ),
        }


@dataclass(frozen=True)
class DivergenceReport:
    c: float
    rows: tuple[DivergenceRow, ...]
    onset: int | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "c": self.c,
            "onset": self.onset,
            "rows": [r.to_dict() for r in self.rows],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "ln_A", "ln_B", "ratio", "normalized_exponent"])
        for r in self.rows:
            norm = r.a.log / math.log(r.n) ** 2 if r.n >= 2 else ""
            w.writerow(
                [r.n, repr(r.a.log), repr(r.b.log), repr(r.ratio), norm]
            )
        return buf.getvalue()


def divergence_report(
    x: Sequence[float], n_grid: Sequence[int]
) -> DivergenceReport:
    """Lower bounds A_n - 2c B_n on |S^n(u + Tx)|, c = max |x_j|.

    `onset` is the first grid n from which the bound stays positive and
    increasing.
    """
    c = max((abs(float(v)) for v in x), default=0.0)
    two_c = LogValue.from_float(2.0 * c)
    rows = []
    for n in n_grid:
        a, b = a_n(n), b_n(n)
        rows.append(DivergenceRow(n, a, b, a - two_c * b))
    onset = None
    for i in range(len(rows) - 1, -1, -1):
        if rows[i].bound.sign <= 0:
            break
        if i + 1 < len(rows) and not rows[i].bound < rows[i + 1].bound:
            break
        onset = rows[i].n
    logger.info(f"divergence bound with c={c}: positive from n={onset}")
    return DivergenceReport(c=c, rows=tuple(rows), onset=onset)


@dataclass(frozen=True)
class TailThreshold:
    n: int
    k: int

    @property
    def split(self) -> float:
        """Where a quarter of ln n would put the split."""
        return math.log(self.n) / 4

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "k": self.k,
            "quarter_log_n": self.split,
            "k_over_log_n": self.k / math.log(self.n),
        }


def tail_threshold(n: int) -> TailThreshold:
    """Smallest k with (k+1) exp(-2k-2) <= 4 n^-2 ln n."""
    if n < 2:
        raise PreconditionError(f"need n >= 2, got {n}")
    target = math.log(4.0) - 2.0 * math.log(n) + math.log(math.log(n))
    k = 0
    while math.log(k + 1) - 2.0 * k - 2.0 > target:
        k += 1
    return TailThreshold(n, k)


@dataclass(frozen=True)
class SplitSums:
    n: int
    cut: int
    a_head: LogValue
    b_head: LogValue
    a_total: LogValue

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "cut": self.cut,
            "a_head_over_a": math.exp(self.a_head.log - self.a_total.log),
            "b_head_over_a": math.exp(self.b_head.log - self.a_total.log),
        }


def split_sums(n: int) -> SplitSums:
    """A'_n and B'_n: the parts of A_n, B_n with k < (ln n)/4."""
    if n < 2:
        raise PreconditionError(f"need n >= 2, got {n}")
    cut = min(n + 1, math.ceil(math.log(n) / 4))
    k = np.arange(cut)
    lb = _log_binomial_row(n, max(cut - 1, 0))[:cut]
    a_logs = lb - np.log1p(k) - k * (k + 1.0)
    b_logs = lb - (k + 1.0) * (k + 2.0)
    return SplitSums(
        n=n,
        cut=cut,
        a_head=LogValue.sum(np.ones_like(a_logs), a_logs),
        b_head=LogValue.sum(np.ones_like(b_logs), b_logs),
        a_total=a_n(n),
    )
