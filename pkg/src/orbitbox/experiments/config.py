"""
Experiment configuration: TOML files, or the same mapping built from
command-line flags.
"""

import logging
import tomllib
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from orbitbox.base import ConfigError, default_out_dir
from orbitbox.operators import OperatorModel, from_spec, to_spec

logger = logging.getLogger(__name__)

EXPERIMENTS = (
    "orbit-coverage",
    "coupled-orbit",
    "torus-closure",
    "winding-props",
    "lemma-map-demo",
    "sc-criterion",
    "combine-witnesses",
    "rplus-classify",
    "ray-obstruction",
    "su-identities",
    "krylov",
    "vandermonde",
    "direct-sum-cyclicity",
    "ratio-structure",
    "volterra",
    "asymptotics",
    "semigroup-ex1",
    "ansari-cosets",
    "semigroup-powers",
)


class ReportFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


@dataclass(frozen=True)
class OutputConfig:
    directory: str = field(default_factory=default_out_dir)
    format: ReportFormat = ReportFormat.JSON


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    params: dict[str, Any] = field(default_factory=dict)
    operator: OperatorModel | None = None
    output: OutputConfig = field(default_factory=OutputConfig)
    jobs: int = 1

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        known = {"experiment", "seed", "params", "operator", "output", "jobs"}
        for key in data:
            if key not in known:
                raise ConfigError("unknown key", key)

        experiment = data.get("experiment")
        if experiment not in EXPERIMENTS:
            raise ConfigError(
                f"expected one of {', '.join(EXPERIMENTS)}, "
                f"got {experiment!r}",
                "experiment",
            )
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError("expected a non-negative integer", "seed")
        jobs = data.get("jobs", 1)
        if not isinstance(jobs, int) or isinstance(jobs, bool) or jobs < 1:
            raise ConfigError("expected a positive integer", "jobs")
        params = data.get("params", {})
        if not isinstance(params, Mapping):
            raise ConfigError("expected a table", "params")

        operator = None
        if "operator" in data:
            operator = from_spec(data["operator"], "operator")

        out = data.get("output", {})
        if not isinstance(out, Mapping):
            raise ConfigError("expected a table", "output")
        for key in out:
            if key not in ("directory", "format"):
                raise ConfigError("unknown key", f"output.{key}")
        try:
            fmt = ReportFormat(out.get("format", "json"))
        except ValueError:
            raise ConfigError(
                "expected 'json' or 'csv'", "output.format"
            ) from None
        directory = out.get("directory") or default_out_dir()
        if not isinstance(directory, str):
            raise ConfigError("expected a path string", "output.directory")

        return cls(
            experiment=experiment,
            seed=seed,
            params=dict(params),
            operator=operator,
            output=OutputConfig(directory, fmt),
            jobs=jobs,
        )

    @classmethod
    def from_toml(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            with path.open("rb") as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
        except OSError as e:
            raise ConfigError(f"cannot read {path}: {e.strerror}") from e
        logger.debug(f"loaded config {path}: {sorted(data)}")
        return cls.from_mapping(data)

    def with_overrides(
        self,
        seed: int | None = None,
        out_dir: str | None = None,
        fmt: str | None = None,
        jobs: int | None = None,
        params: Mapping[str, Any] | None = None,
    ) -> "ExperimentConfig":
        """Command-line values win over the file."""
        output = self.output
        if out_dir is not None:
            output = replace(output, directory=out_dir)
        if fmt is not None:
            output = replace(output, format=ReportFormat(fmt))
        return replace(
            self,
            seed=self.seed if seed is None else seed,
            jobs=self.jobs if jobs is None else jobs,
            params={**self.params, **(params or {})},
            output=output,
        )

    def echo(self) -> dict[str, Any]:
        """Normalized config embedded in reports.

        Output location and worker count are left out: they must not
        change report bytes.
        """
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "params": dict(sorted(self.params.items())),
            "operator": to_spec(self.operator) if self.operator else None,
            "format": self.output.format.value,
        }


@dataclass(frozen=True)
class Param:
    kind: type | tuple[type, ...]
    default: Any
    minimum: float | None = None


def resolve_params(
    config: ExperimentConfig, declared: Mapping[str, Param]
) -> dict[str, Any]:
    """Declared parameters with defaults filled in; unknown or mistyped
    entries raise ConfigError naming `params.<name>`."""
    for name in config.params:
        if name not in declared:
            raise ConfigError(
                f"not a parameter of {config.experiment}; expected one of "
                f"{', '.join(sorted(declared)) or 'none'}",
                f"params.{name}",
            )
    out = {}
    for name, p in declared.items():
        value = config.params.get(name, p.default)
        kinds = p.kind if isinstance(p.kind, tuple) else (p.kind,)
        if float in kinds and type(value) is int:
            value = float(value)
        if value is not None and (
            not isinstance(value, kinds)
            or (isinstance(value, bool) and bool not in kinds)
        ):
            names = "/".join(k.__name__ for k in kinds)
            raise ConfigError(
                f"expected {names}, got {value!r}", f"params.{name}"
            )
        if p.minimum is not None and value is not None and value < p.minimum:
            raise ConfigError(f"must be >= {p.minimum}", f"params.{name}")
        out[name] = value
    return out
