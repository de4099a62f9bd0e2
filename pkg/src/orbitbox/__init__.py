from .base import ARTIFACT_VERSION as __version__
from .base import OrbitboxError
from .operators import OperatorModel, apply, apply_power, materialize
from .orbit import CoverageMode, coverage, orbit
from .torus import TorusPoint, closure_of_powers, is_generator

__all__ = [
    "__version__",
    "OrbitboxError",
    # Operators
    "OperatorModel",
    "apply",
    "apply_power",
    "materialize",
    # Orbits
    "CoverageMode",
    "coverage",
    "orbit",
    # Torus
    "TorusPoint",
    "closure_of_powers",
    "is_generator",
]
