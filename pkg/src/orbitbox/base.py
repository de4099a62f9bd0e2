import math
import os
from enum import Enum

import numpy as np

ARTIFACT_VERSION = "0.1"
SCHEMA_VERSION = "1"

# Relative tolerances shared by the identity checks
MATERIALIZE_RTOL = 1e-12
WINDING_SNAP_TOL = 1e-9
CLOSED_PATH_TOL = 1e-12
KRYLOV_RANK_TOL = 1e-8
EIGENPAIR_TOL = 1e-10
PHASE_CLUSTER_TOL = 1e-9

# Continued fractions / relation search bounds
DEFAULT_MAX_DENOMINATOR = 10**6
DEFAULT_RELATION_BOUND = 12

# Dense materialization refuses anything bigger than this
MAX_DENSE_DIM = int(os.environ.get("ORBITBOX_MAX_DENSE_DIM", "4096"))


def default_out_dir() -> str:
    return os.path.expanduser(
        os.environ.get("ORBITBOX_OUT_DIR", os.path.join(".", "reports"))
    )


class OrbitboxError(Exception):
    """Root of every error raised by orbitbox."""


class DimensionMismatchError(OrbitboxError, ValueError):
    pass


class FieldMismatchError(OrbitboxError, ValueError):
    pass


class CapacityError(OrbitboxError, MemoryError):
    pass


class ZeroVectorError(OrbitboxError, ValueError):
    pass


class RelationSearchError(OrbitboxError, ValueError):
    pass


class EmptySampleError(OrbitboxError, ValueError):
    pass


class InsufficientSamplingError(OrbitboxError, ValueError):
    """Adjacent samples are half a turn or more apart."""


class EndpointMismatchError(OrbitboxError, ValueError):
    pass


class NonMonotoneError(OrbitboxError, ValueError):
    pass


class MarginViolationError(OrbitboxError, ValueError):
    pass


class PreconditionError(OrbitboxError, ValueError):
    pass


class EmptyTailError(OrbitboxError, ValueError):
    pass


class WitnessMismatchError(OrbitboxError, ValueError):
    pass


class EigenpairResidualError(OrbitboxError, ValueError):
    pass


class EigenDeficiencyError(OrbitboxError, ValueError):
    pass


class ConfigError(OrbitboxError, ValueError):
    """Bad experiment configuration; `field` names the dotted path."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ReportSchemaError(OrbitboxError, ValueError):
    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")


class CoverageMode(str, Enum):
    """Which family is being tested for density.

    plain: the orbit itself (hypercyclic); projective_complex: all scalar
    multiples (supercyclic); ray_positive: positive multiples.
    """

    PLAIN = "plain"
    PROJECTIVE_COMPLEX = "projective_complex"
    RAY_POSITIVE = "ray_positive"


def unit_vector(x: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(x)
    if nrm == 0:
        raise ZeroVectorError("zero vector has no direction")
    return x / nrm


def distance(
    x: np.ndarray, y: np.ndarray, mode: CoverageMode | str
) -> float:
    mode = CoverageMode(mode)
    x, y = np.asarray(x), np.asarray(y)
    if mode is CoverageMode.PLAIN:
        return float(np.linalg.norm(x - y))
    xh, yh = unit_vector(x), unit_vector(y)
    if mode is CoverageMode.RAY_POSITIVE:
        return float(np.linalg.norm(xh - yh))
    # min over |lambda| = 1 of |xh - lambda yh| is attained at the phase
    # of <yh, xh>
    overlap = abs(np.vdot(yh, xh))
    return math.sqrt(max(0.0, 2.0 - 2.0 * min(1.0, float(overlap))))
