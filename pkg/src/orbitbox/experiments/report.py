"""
Report envelope, deterministic serialization and schema validation.
"""

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import aiofiles
import jsonschema
import numpy as np

from orbitbox.base import ARTIFACT_VERSION, SCHEMA_VERSION, ReportSchemaError

logger = logging.getLogger(__name__)


@dataclass
class Report:
    experiment: str
    seed: int
    config: dict[str, Any]
    checks: dict[str, bool] = field(default_factory=dict)
    results: dict[str, Any] = field(default_factory=dict)
    header: Sequence[str] = ()
    rows: list[list[Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def check(self, name: str, ok: bool) -> bool:
        self.checks[name] = bool(ok)
        if not ok:
            logger.warning(f"{self.experiment}: check {name} failed")
        return bool(ok)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "artifact_version": ARTIFACT_VERSION,
            "experiment": self.experiment,
            "seed": self.seed,
            "config": self.config,
            "checks": dict(self.checks),
            "passed": self.passed,
            "results": self.results,
        }

    def to_json(self) -> str:
        return (
            json.dumps(
                plain(self.to_dict()),
                sort_keys=True,
                indent=2,
                allow_nan=False,
                ensure_ascii=False,
            )
            + "\n"
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header or ["check", "passed"])
        if self.header:
            for row in self.rows:
                w.writerow([_cell(v) for v in row])
        else:
            for name, ok in sorted(self.checks.items()):
                w.writerow([name, ok])
        return buf.getvalue()


def _cell(v: Any) -> Any:
    v = plain(v)
    if isinstance(v, float):
        return repr(v)
    return v


def plain(obj: Any) -> Any:
    """JSON-ready copy; non-finite floats become strings."""
    match obj:
        case Enum():
            return obj.value
        case bool() | None | str():
            return obj
        case int() | np.integer():
            return int(obj)
        case float() | np.floating():
            x = float(obj)
            if math.isfinite(x):
                return x
            return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
        case complex() | np.complexfloating():
            return [plain(obj.real), plain(obj.imag)]
        case np.bool_():
            return bool(obj)
        case np.ndarray():
            return [plain(v) for v in obj.tolist()]
        case dict():
            return {str(k): plain(v) for k, v in obj.items()}
        case list() | tuple():
            return [plain(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return plain(obj.to_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def report_paths(report: Report, out_dir: str | Path, fmt: str) -> list[Path]:
    base = Path(out_dir) / report.experiment
    paths = [base.with_suffix(".json")]
    if fmt == "csv":
        paths.append(base.with_suffix(".csv"))
    return paths


async def write_report(
    report: Report, out_dir: str | Path, fmt: str = "json"
) -> list[Path]:
    """Write the JSON report (and CSV table when asked).

    Everything goes to temporary names first; nothing is renamed into
    place unless every file was written.
    """
    paths = report_paths(report, out_dir, fmt)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    bodies = [report.to_json()]
    if fmt == "csv":
        bodies.append(report.to_csv())
    temps = [p.with_name(f".{p.name}.tmp") for p in paths]
    try:
        for tmp, body in zip(temps, bodies):
            async with aiofiles.open(tmp, "w", encoding="utf-8") as f:
                await f.write(body)
    except OSError:
        for tmp in temps:
            tmp.unlink(missing_ok=True)
        raise
    for tmp, path in zip(temps, paths):
        os.replace(tmp, path)
        logger.info(f"report written to {path}")
    return paths


def load_schema() -> dict[str, Any]:
    text = (
        resources.files("orbitbox.experiments")
        .joinpath("schema.json")
        .read_text(encoding="utf-8")
    )
    return json.loads(text)


def _pointer(path: Sequence[Any]) -> str:
    return "".join(
        "/" + str(p).replace("~", "~0").replace("/", "~1") for p in path
    )


def report_schema_validate(path: str | Path) -> bool:
    """True for a valid report; raises ReportSchemaError with a JSON
    pointer otherwise."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ReportSchemaError(
            f"not JSON (line {e.lineno}, column {e.colno}): {e.msg}"
        ) from e
    if isinstance(data, dict) and "schema_version" in data:
        if data["schema_version"] != SCHEMA_VERSION:
            raise ReportSchemaError(
                f"schema_version is {data['schema_version']!r}, this "
                f"validator reads {SCHEMA_VERSION!r}",
                "/schema_version",
            )
    validator = jsonschema.Draft202012Validator(load_schema())
    error = jsonschema.exceptions.best_match(validator.iter_errors(data))
    if error is not None:
        where = list(error.absolute_path)
        if error.validator == "required":
            missing = [
                k for k in error.validator_value if k not in error.instance
            ]
            where += missing[:1]
        raise ReportSchemaError(error.message, _pointer(where))
    return True
