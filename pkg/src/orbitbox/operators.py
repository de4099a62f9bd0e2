"""
Operator models: finite coordinate realizations of shifts, Volterra and
composition operators, rotations, direct sums, the S_u extension and
matrix exponentials.

Vectors are plain numpy arrays; the scalar field of a vector is read off
its dtype.
"""

import functools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Sequence

import numpy as np
import scipy.linalg

from orbitbox.base import (
    MAX_DENSE_DIM,
    CapacityError,
    ConfigError,
    DimensionMismatchError,
    FieldMismatchError,
)

logger = logging.getLogger(__name__)


class ScalarField(str, Enum):
    REAL = "real"
    COMPLEX = "complex"

    @classmethod
    def of(cls, x: np.ndarray) -> "ScalarField":
        return cls.COMPLEX if np.iscomplexobj(x) else cls.REAL

    def join(self, other: "ScalarField") -> "ScalarField":
        if ScalarField.COMPLEX in (self, other):
            return ScalarField.COMPLEX
        return ScalarField.REAL

    @property
    def dtype(self) -> type:
        return complex if self is ScalarField.COMPLEX else float


def as_vector(x: Any, field: ScalarField | None = None) -> np.ndarray:
    """Coerce a sequence to a 1-d float or complex array."""
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise DimensionMismatchError(
            f"expected a 1-d vector, got {arr.shape}"
        )
    if field is ScalarField.COMPLEX or np.iscomplexobj(arr):
        return arr.astype(complex)
    return arr.astype(float)


def basis_vector(dim: int, index: int, field=ScalarField.REAL) -> np.ndarray:
    e = np.zeros(dim, dtype=field.dtype)
    e[index] = 1
    return e


class OperatorModel(ABC):
    """A linear operator on K^dim with exact application."""

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @property
    def field(self) -> ScalarField:
        return ScalarField.REAL

    @abstractmethod
    def _apply(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _adjoint(self) -> "OperatorModel": ...

    def _materialize(self) -> np.ndarray:
        cols = [
            self._apply(basis_vector(self.dim, i, self.field))
            for i in range(self.dim)
        ]
        return np.column_stack(cols)

    def _leaked(self, x: np.ndarray) -> float:
        return 0.0


# Weight sequences w_1, w_2, ... for the shifts
WEIGHT_RULES = {
    "unit": lambda n: np.ones_like(n, dtype=float),
    "exp2decay": lambda n: np.exp(-2.0 * n),
}


def weights_from_rule(rule: str, dim: int) -> tuple[float, ...]:
    if rule not in WEIGHT_RULES:
        raise ConfigError(
            f"unknown weight rule {rule!r}, expected one of "
            f"{sorted(WEIGHT_RULES)}",
            field="operator.weights",
        )
    n = np.arange(1, dim + 1)
    return tuple(float(w) for w in WEIGHT_RULES[rule](n))


def _check_weights(weights: Sequence[float], dim: int) -> None:
    if len(weights) != dim:
        raise DimensionMismatchError(
            f"need {dim} weights w_1..w_{dim}, got {len(weights)}"
        )
    if any(not w > 0 for w in weights):
        raise ValueError("shift weights must be positive")


@dataclass(frozen=True)
class DenseMatrix(OperatorModel):
    entries: np.ndarray = field(compare=False)

    def __post_init__(self):
        m = np.asarray(self.entries)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatchError(f"need a square matrix: {m.shape}")
        m = m.astype(complex if np.iscomplexobj(m) else float)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def field(self) -> ScalarField:
        return ScalarField.of(self.entries)

    def _apply(self, x):
        return self.entries @ x

    def _adjoint(self):
        return DenseMatrix(self.entries.conj().T)

    def _materialize(self):
        return self.entries.copy()

    def __eq__(self, other):
        return isinstance(other, DenseMatrix) and np.array_equal(
            self.entries, other.entries
        )


@dataclass(frozen=True)
class WeightedBackwardShift(OperatorModel):
    """(Tx)_j = w_{j+1} x_{j+1}; coordinates past the window read as 0.

    `weights` holds w_1..w_N for a window of N coordinates.
    """

    weights: tuple[float, ...]
    rule: str | None = None

    def __post_init__(self):
        _check_weights(self.weights, len(self.weights))

    @classmethod
    def from_rule(cls, rule: str, dim: int) -> "WeightedBackwardShift":
        return cls(weights_from_rule(rule, dim), rule=rule)

    @property
    def dim(self):
        return len(self.weights)

    def _apply(self, x):
        y = np.zeros_like(x)
        w = np.asarray(self.weights)
        y[:-1] = w[:-1] * x[1:]
        return y

    def _adjoint(self):
        return WeightedForwardShift(self.weights, rule=self.rule)

    def _materialize(self):
        return np.diag(np.asarray(self.weights[:-1]), k=1)


@dataclass(frozen=True)
class WeightedForwardShift(OperatorModel):
    """(Tx)_{j+1} = w_{j+1} x_j; the last coordinate leaks out."""

    weights: tuple[float, ...]
    rule: str | None = None

    def __post_init__(self):
        _check_weights(self.weights, len(self.weights))

    @classmethod
    def from_rule(cls, rule: str, dim: int) -> "WeightedForwardShift":
        return cls(weights_from_rule(rule, dim), rule=rule)

    @property
    def dim(self):
        return len(self.weights)

    def _apply(self, x):
        y = np.zeros_like(x)
        w = np.asarray(self.weights)
        y[1:] = w[:-1] * x[:-1]
        return y

    def _adjoint(self):
        return WeightedBackwardShift(self.weights, rule=self.rule)

    def _materialize(self):
        return np.diag(np.asarray(self.weights[:-1]), k=-1)

    def _leaked(self, x):
        return float(abs(self.weights[-1] * x[-1]))


@dataclass(frozen=True)
class Identity(OperatorModel):
    size: int

    @property
    def dim(self):
        return self.size

    def _apply(self, x):
        return x.copy()

    def _adjoint(self):
        return self

    def _materialize(self):
        return np.eye(self.size)


@dataclass(frozen=True)
class IdentityPlus(OperatorModel):
    inner: OperatorModel

    @property
    def dim(self):
        return self.inner.dim

    @property
    def field(self):
        return self.inner.field

    def _apply(self, x):
        return x + self.inner._apply(x)

    def _adjoint(self):
        return IdentityPlus(self.inner._adjoint())

    def _materialize(self):
        m = self.inner._materialize()
        return m + np.eye(self.dim, dtype=m.dtype)

    def _leaked(self, x):
        return self.inner._leaked(x)


def _grid(m: int) -> np.ndarray:
    """Midpoints (2i+1)/(2m) of the uniform grid on [0, 1]."""
    return (2 * np.arange(m) + 1) / (2 * m)


@dataclass(frozen=True)
class VolterraQuadrature(OperatorModel):
    """Left-endpoint rule for Vf(t) = int_0^t f on m midpoints.

    With `transposed` it is the matrix transpose, approximating
    V*g(x) = int_x^1 g.
    """

    m: int
    transposed: bool = False

    @property
    def dim(self):
        return self.m

    def _apply(self, x):
        h = 1.0 / self.m
        out = np.zeros_like(x)
        if self.transposed:
            out[:-1] = h * np.flipud(np.cumsum(np.flipud(x[1:])))
        else:
            out[1:] = h * np.cumsum(x[:-1])
        return out

    def _adjoint(self):
        return VolterraQuadrature(self.m, not self.transposed)

    def _materialize(self):
        v = np.tril(np.ones((self.m, self.m)), k=-1) / self.m
        return v.T if self.transposed else v


@dataclass(frozen=True)
class CompositionJ(OperatorModel):
    """Jf(x) = f((1-x)/2) by linear interpolation between midpoints."""

    m: int
    transposed: bool = False

    @property
    def dim(self):
        return self.m

    def _stencil(self) -> tuple[np.ndarray, np.ndarray]:
        target = (1.0 - _grid(self.m)) / 2.0
        # position in midpoint index units; clamp below the first midpoint
        pos = np.clip(target * self.m - 0.5, 0.0, self.m - 1.0)
        left = np.minimum(np.floor(pos).astype(int), self.m - 2)
        return left, pos - left

    def _apply(self, x):
        left, frac = self._stencil()
        if not self.transposed:
            return (1.0 - frac) * x[left] + frac * x[left + 1]
        out = np.zeros_like(x)
        np.add.at(out, left, (1.0 - frac) * x)
        np.add.at(out, left + 1, frac * x)
        return out

    def _adjoint(self):
        return CompositionJ(self.m, not self.transposed)

    def _materialize(self):
        left, frac = self._stencil()
        j = np.zeros((self.m, self.m))
        rows = np.arange(self.m)
        np.add.at(j, (rows, left), 1.0 - frac)
        np.add.at(j, (rows, left + 1), frac)
        return j.T if self.transposed else j


@dataclass(frozen=True)
class Rotation2D(OperatorModel):
    """Rows (cos 2pi t, sin 2pi t; -sin 2pi t, cos 2pi t), t in turns."""

    turns: float

    @property
    def dim(self):
        return 2

    def _materialize(self):
        c, s = math.cos(2 * math.pi * self.turns), math.sin(
            2 * math.pi * self.turns
        )
        return np.array([[c, s], [-s, c]])

    def _apply(self, x):
        return self._materialize() @ x

    def _adjoint(self):
        return Rotation2D(-self.turns)


@dataclass(frozen=True)
class ScalarMultiple(OperatorModel):
    z: complex
    inner: OperatorModel

    @property
    def dim(self):
        return self.inner.dim

    @property
    def field(self):
        if isinstance(self.z, complex) and self.z.imag != 0:
            return ScalarField.COMPLEX
        return self.inner.field

    def _scalar(self):
        if isinstance(self.z, complex) and self.z.imag == 0:
            return self.z.real
        return self.z

    def _apply(self, x):
        return self._scalar() * self.inner._apply(x)

    def _adjoint(self):
        return ScalarMultiple(np.conj(self.z).item(), self.inner._adjoint())

    def _materialize(self):
        return self._scalar() * self.inner._materialize()

    def _leaked(self, x):
        return abs(self.z) * self.inner._leaked(x)


@dataclass(frozen=True)
class DirectSum(OperatorModel):
    parts: tuple[OperatorModel, ...]

    def __post_init__(self):
        if not self.parts:
            raise ValueError("direct sum of nothing")
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def dim(self):
        return sum(p.dim for p in self.parts)

    @property
    def field(self):
        f = ScalarField.REAL
        for p in self.parts:
            f = f.join(p.field)
        return f

    def offsets(self) -> list[int]:
        return [0, *np.cumsum([p.dim for p in self.parts]).tolist()]

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        o = self.offsets()
        return [x[o[i] : o[i + 1]] for i in range(len(self.parts))]

    def _apply(self, x):
        chunks = [p._apply(c) for p, c in zip(self.parts, self.split(x))]
        dtype = np.result_type(x, *chunks)
        return np.concatenate(chunks).astype(dtype, copy=False)

    def _adjoint(self):
        return DirectSum(tuple(p._adjoint() for p in self.parts))

    def _materialize(self):
        return scipy.linalg.block_diag(
            *[p._materialize() for p in self.parts]
        )

    def _leaked(self, x):
        return math.hypot(
            *[p._leaked(c) for p, c in zip(self.parts, self.split(x))]
        )


@dataclass(frozen=True)
class ExtensionSu(OperatorModel):
    """S_u(y, t) = (Sy + tu, t) on dim(S) + 1 coordinates."""

    inner: OperatorModel
    u: np.ndarray = field(compare=False)

    def __post_init__(self):
        u = as_vector(self.u)
        if u.shape[0] != self.inner.dim:
            raise DimensionMismatchError(
                f"u has {u.shape[0]} coordinates, S acts on {self.inner.dim}"
            )
        object.__setattr__(self, "u", u)

    @property
    def dim(self):
        return self.inner.dim + 1

    @property
    def field(self):
        return self.inner.field.join(ScalarField.of(self.u))

    def _apply(self, x):
        y, t = x[:-1], x[-1]
        head = self.inner._apply(y) + t * self.u
        return np.concatenate([head, [t]]).astype(head.dtype)

    def _adjoint(self):
        return DenseMatrix(self._materialize().conj().T)

    def _materialize(self):
        s = self.inner._materialize()
        dtype = np.result_type(s, self.u)
        m = np.zeros((self.dim, self.dim), dtype=dtype)
        m[:-1, :-1] = s
        m[:-1, -1] = self.u
        m[-1, -1] = 1
        return m

    def _leaked(self, x):
        return self.inner._leaked(x[:-1])

    def __eq__(self, other):
        return (
            isinstance(other, ExtensionSu)
            and self.inner == other.inner
            and np.array_equal(self.u, other.u)
        )


@dataclass(frozen=True)
class Power(OperatorModel):
    inner: OperatorModel
    exponent: int

    def __post_init__(self):
        if self.exponent < 0:
            raise ValueError("negative operator power")

    @property
    def dim(self):
        return self.inner.dim

    @property
    def field(self):
        return self.inner.field

    def _apply(self, x):
        for _ in range(self.exponent):
            x = self.inner._apply(x)
        return x

    def _adjoint(self):
        return Power(self.inner._adjoint(), self.exponent)

    def _materialize(self):
        return np.linalg.matrix_power(
            self.inner._materialize(), self.exponent
        )

    def _leaked(self, x):
        total = 0.0
        for _ in range(self.exponent):
            total += self.inner._leaked(x)
            x = self.inner._apply(x)
        return total


@dataclass(frozen=True)
class MatrixExponential(OperatorModel):
    generator: OperatorModel
    t: float

    @property
    def dim(self):
        return self.generator.dim

    @property
    def field(self):
        return self.generator.field

    @functools.cached_property
    def _matrix(self) -> np.ndarray:
        # once per model; expm applies the dense size guard
        return expm(self.generator, self.t)

    def _apply(self, x):
        return self._matrix @ x

    def _adjoint(self):
        return MatrixExponential(self.generator._adjoint(), self.t)

    def _materialize(self):
        return self._matrix.copy()


def salas_operator(rule: str, dim: int) -> IdentityPlus:
    """S = I + T_w for the backward shift with the named weights."""
    return IdentityPlus(WeightedBackwardShift.from_rule(rule, dim))


def _check(model: OperatorModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != model.dim:
        raise DimensionMismatchError(
            f"vector of shape {x.shape} for an operator on K^{model.dim}"
        )
    if np.iscomplexobj(x) and model.field is ScalarField.REAL:
        raise FieldMismatchError(
            "complex vector passed to a real operator; wrap the model in "
            "ScalarMultiple(1j, ...) or embed the operator over C"
        )
    return x.astype(complex) if np.iscomplexobj(x) else x.astype(float)


def apply(model: OperatorModel, x: np.ndarray) -> np.ndarray:
    x = _check(model, x)
    if model.field is ScalarField.COMPLEX:
        x = x.astype(complex)
    return model._apply(x)


def materialize(model: OperatorModel) -> np.ndarray:
    if model.dim > MAX_DENSE_DIM:
        raise CapacityError(
            f"refusing to materialize a {model.dim}x{model.dim} matrix "
            f"(limit {MAX_DENSE_DIM}, see ORBITBOX_MAX_DENSE_DIM)"
        )
    return model._materialize()


def adjoint(model: OperatorModel) -> OperatorModel:
    return model._adjoint()


def leaked_norm(model: OperatorModel, x: np.ndarray) -> float:
    """Norm of the mass one application pushes out of the window."""
    return model._leaked(_check(model, x))


def apply_power(
    model: OperatorModel, n: int, x: np.ndarray
) -> tuple[np.ndarray, float]:
    """T^n x as (unit vector, natural log of the norm).

    The vector is renormalized after every step; a zero result comes back
    as (zeros, -inf).
    """
    if n < 0:
        raise ValueError(f"negative power {n}")
    v = _check(model, x).copy()
    if model.field is ScalarField.COMPLEX:
        v = v.astype(complex)
    nrm = float(np.linalg.norm(v))
    if nrm == 0.0:
        return np.zeros_like(v), -math.inf
    v, lognorm = v / nrm, math.log(nrm)
    for _ in range(n):
        v = model._apply(v)
        nrm = float(np.linalg.norm(v))
        if nrm == 0.0:
            return np.zeros_like(v), -math.inf
        v = v / nrm
        lognorm += math.log(nrm)
    return v, lognorm


TAYLOR_ORDER = 13
SCALING_THRESHOLD = 0.5


def _is_strictly_triangular(m: np.ndarray) -> bool:
    return not np.any(np.triu(m)) or not np.any(np.tril(m))


def _expm(m: np.ndarray) -> np.ndarray:
    """Truncated Taylor series with scaling and squaring."""
    d = m.shape[0]
    eye = np.eye(d, dtype=m.dtype)
    if _is_strictly_triangular(m):
        # nilpotent: the series stops at m^(d-1)
        out, term = eye.copy(), eye.copy()
        for k in range(1, d):
            term = term @ m / k
            if not np.any(term):
                break
            out = out + term
        return out

    norm = float(np.linalg.norm(m, 1))
    squarings = max(0, math.ceil(math.log2(norm / SCALING_THRESHOLD)))
    scaled = m / 2.0**squarings
    coeffs = [1.0 / math.factorial(k) for k in range(TAYLOR_ORDER + 1)]
    out = eye * coeffs[TAYLOR_ORDER]
    for c in reversed(coeffs[:-1]):
        out = scaled @ out + eye * c
    for _ in range(squarings):
        out = out @ out
    return out


def expm(generator: OperatorModel, t: float = 1.0) -> np.ndarray:
    return _expm(t * materialize(generator))


def exp_apply(
    generator: OperatorModel, t: float, x: np.ndarray
) -> np.ndarray:
    x = _check(generator, x)
    if t == 0:
        return x.copy()
    return expm(generator, t) @ x


# Structured specs: plain dicts that survive TOML and JSON


def _encode_scalar(z: complex) -> float | list[float]:
    z = complex(z)
    return z.real if z.imag == 0 else [z.real, z.imag]


def _decode_scalar(v: Any, where: str) -> complex | float:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    raise ConfigError(f"expected a number or [re, im], got {v!r}", where)


def _encode_array(a: np.ndarray) -> Any:
    if np.iscomplexobj(a):
        return {"real": a.real.tolist(), "imag": a.imag.tolist()}
    return a.tolist()


def _decode_array(v: Any, where: str) -> np.ndarray:
    try:
        if isinstance(v, Mapping):
            return np.asarray(v["real"], float) + 1j * np.asarray(
                v["imag"], float
            )
        return np.asarray(v, dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad numeric array: {e}", where) from e


def to_spec(model: OperatorModel) -> dict[str, Any]:
    match model:
        case DenseMatrix(entries=m):
            return {"kind": "dense", "entries": _encode_array(m)}
        case WeightedBackwardShift() | WeightedForwardShift():
            kind = (
                "backward_shift"
                if isinstance(model, WeightedBackwardShift)
                else "forward_shift"
            )
            spec: dict[str, Any] = {"kind": kind, "dim": model.dim}
            spec["weights"] = model.rule or list(model.weights)
            return spec
        case Identity(size=n):
            return {"kind": "identity", "dim": n}
        case IdentityPlus(inner=inner):
            return {"kind": "identity_plus", "inner": to_spec(inner)}
        case VolterraQuadrature(m=m, transposed=tr):
            return {"kind": "volterra", "m": m, "transposed": tr}
        case CompositionJ(m=m, transposed=tr):
            return {"kind": "composition_j", "m": m, "transposed": tr}
        case Rotation2D(turns=t):
            return {"kind": "rotation2d", "turns": t}
        case ScalarMultiple(z=z, inner=inner):
            return {
                "kind": "scalar_multiple",
                "z": _encode_scalar(z),
                "inner": to_spec(inner),
            }
        case DirectSum(parts=parts):
            return {
                "kind": "direct_sum",
                "parts": [to_spec(p) for p in parts],
            }
        case ExtensionSu(inner=inner, u=u):
            return {
                "kind": "extension_su",
                "inner": to_spec(inner),
                "u": _encode_array(u),
            }
        case Power(inner=inner, exponent=e):
            return {"kind": "power", "inner": to_spec(inner), "exponent": e}
        case MatrixExponential(generator=g, t=t):
            return {"kind": "matrix_exp", "generator": to_spec(g), "t": t}
    raise TypeError(f"no spec encoding for {type(model).__name__}")


def from_spec(
    spec: Mapping[str, Any], where: str = "operator"
) -> OperatorModel:
    """Rebuild a model from `to_spec` output or a TOML [operator] table."""
    if not isinstance(spec, Mapping):
        raise ConfigError("expected a table", where)

    def need(key: str) -> Any:
        if key not in spec:
            raise ConfigError("missing key", f"{where}.{key}")
        return spec[key]

    def as_int(key: str, minimum: int = 1) -> int:
        v = need(key)
        if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
            raise ConfigError(
                f"expected an integer >= {minimum}", f"{where}.{key}"
            )
        return v

    kind = need("kind")
    try:
        match kind:
            case "dense":
                return DenseMatrix(_decode_array(need("entries"), where))
            case "backward_shift" | "forward_shift":
                cls = (
                    WeightedBackwardShift
                    if kind == "backward_shift"
                    else WeightedForwardShift
                )
                dim = as_int("dim")
                w = spec.get("weights", "unit")
                if isinstance(w, str):
                    return cls.from_rule(w, dim)
                return cls(tuple(float(v) for v in w))
            case "identity":
                return Identity(as_int("dim"))
            case "identity_plus":
                return IdentityPlus(
                    from_spec(need("inner"), f"{where}.inner")
                )
            case "volterra":
                return VolterraQuadrature(
                    as_int("m", 2), bool(spec.get("transposed", False))
                )
            case "composition_j":
                return CompositionJ(
                    as_int("m", 2), bool(spec.get("transposed", False))
                )
            case "rotation2d":
                return Rotation2D(float(need("turns")))
            case "scalar_multiple":
                return ScalarMultiple(
                    _decode_scalar(need("z"), f"{where}.z"),
                    from_spec(need("inner"), f"{where}.inner"),
                )
            case "direct_sum":
                parts = need("parts")
                return DirectSum(
                    tuple(
                        from_spec(p, f"{where}.parts[{i}]")
                        for i, p in enumerate(parts)
                    )
                )
            case "extension_su":
                return ExtensionSu(
                    from_spec(need("inner"), f"{where}.inner"),
                    _decode_array(need("u"), f"{where}.u"),
                )
            case "power":
                return Power(
                    from_spec(need("inner"), f"{where}.inner"),
                    as_int("exponent", 0),
                )
            case "matrix_exp":
                return MatrixExponential(
                    from_spec(need("generator"), f"{where}.generator"),
                    float(need("t")),
                )
    except (DimensionMismatchError, ValueError, TypeError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e), where) from e
    raise ConfigError(f"unknown operator kind {kind!r}", f"{where}.kind")
