#!/usr/bin/env python3
"""
Command line entry points for orbitbox.

Every experiment is a subcommand. Reports land in --out-dir (default
$ORBITBOX_OUT_DIR or ./reports). Exit codes: 0 when every check passes,
1 when a check fails, 2 for usage and configuration errors.
"""

import logging
import sys
import tomllib
from typing import Any, Callable

import anyio
import click
from rich.console import Console
from rich.table import Table

from orbitbox.base import ARTIFACT_VERSION, ConfigError, ReportSchemaError
from orbitbox.experiments import (
    SUITES,
    ExperimentConfig,
    Param,
    Report,
    report_schema_validate,
    run_suite,
    write_report,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def _parse_params(items: tuple[str, ...]) -> dict[str, Any]:
    """KEY=VALUE pairs; VALUE is read as a TOML literal, else a string."""
    out: dict[str, Any] = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"expected KEY=VALUE, got {item!r}", "--param")
        try:
            value = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw
        out[key.strip()] = value
    return out


def _param_option(name: str, p: Param) -> Callable | None:
    kinds = p.kind if isinstance(p.kind, tuple) else (p.kind,)
    flag = "--" + name.replace("_", "-")
    dest = f"param_{name}"
    text = f"Override params.{name} (default: {p.default!r})"
    if list in kinds:
        return None
    if bool in kinds:
        return click.option(
            f"{flag}/--no-{flag[2:]}", dest, default=None, help=text
        )
    if str in kinds:
        kind: Any = str
    elif float in kinds:
        kind = float
    else:
        kind = int
    return click.option(flag, dest, type=kind, default=None, help=text)


def _experiment_options(fn: Callable) -> Callable:
    options = [
        click.option(
            "--config",
            "config_path",
            type=click.Path(exists=True, dir_okay=False),
            help="TOML experiment config",
        ),
        click.option(
            "--seed", type=click.IntRange(min=0), help="Base random seed"
        ),
        click.option(
            "--out-dir",
            type=click.Path(file_okay=False),
            help="Report directory (default: $ORBITBOX_OUT_DIR or ./reports)",
        ),
        click.option(
            "--format",
            "fmt",
            type=click.Choice(["json", "csv"]),
            help="Also write a CSV table with csv",
        ),
        click.option(
            "--jobs", type=click.IntRange(min=1), help="Worker threads"
        ),
        click.option(
            "-p",
            "--param",
            "params",
            multiple=True,
            metavar="KEY=VALUE",
            help="Override one parameter; VALUE is a TOML literal",
        ),
        click.option("-v", "--verbose", is_flag=True, help="Debug logging"),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _print_summary(report: Report) -> None:
    table = Table(title=f"{report.experiment} (seed {report.seed})")
    table.add_column("check")
    table.add_column("result")
    for name, ok in report.checks.items():
        table.add_row(name, "[green]pass[/]" if ok else "[red]FAIL[/]")
    Console().print(table)


def _run(
    name: str,
    config_path: str | None,
    seed: int | None,
    out_dir: str | None,
    fmt: str | None,
    jobs: int | None,
    params: tuple[str, ...],
    verbose: bool,
    flags: dict[str, Any],
) -> None:
    _setup_logging(verbose)
    click.echo(f"🌀 Running {name}")
    try:
        overrides = _parse_params(params)
        overrides.update(
            {
                k.removeprefix("param_"): v
                for k, v in flags.items()
                if v is not None
            }
        )
        if config_path:
            config = ExperimentConfig.from_toml(config_path)
            if config.experiment != name:
                raise ConfigError(
                    f"config is for {config.experiment}, not {name}",
                    "experiment",
                )
        else:
            config = ExperimentConfig(experiment=name)
        config = config.with_overrides(
            seed=seed,
            out_dir=out_dir,
            fmt=fmt,
            jobs=jobs,
            params=overrides,
        )
        report = anyio.run(run_suite, config)
    except ConfigError as e:
        click.echo(f"❌ Configuration error: {e}", err=True)
        sys.exit(2)
    except Exception as e:
        logger.error(f"{name} failed: {e}", exc_info=True)
        click.echo(f"💥 {name} failed: {e}", err=True)
        sys.exit(1)

    try:
        paths = anyio.run(
            write_report,
            report,
            config.output.directory,
            config.output.format.value,
        )
    except OSError as e:
        logger.error(f"could not write reports: {e}", exc_info=True)
        sys.exit(1)

    _print_summary(report)
    for path in paths:
        click.echo(f"   📄 {path}")
    failed = [k for k, ok in report.checks.items() if not ok]
    if failed:
        click.echo(
            f"❌ {len(failed)} of {len(report.checks)} checks failed: "
            f"{', '.join(failed)}"
        )
        sys.exit(1)
    click.echo(f"✅ All {len(report.checks)} checks passed")


@click.group()
@click.version_option(ARTIFACT_VERSION, prog_name="orbitbox")
def orbitbox_cli() -> None:
    """Orbitbox - numerical experiments on orbits, cyclicity and
    supercyclicity of linear operators."""


def _make_command(name: str) -> click.Command:
    suite = SUITES[name]

    def command(**kwargs: Any) -> None:
        common = {
            k: kwargs.pop(k)
            for k in (
                "config_path",
                "seed",
                "out_dir",
                "fmt",
                "jobs",
                "params",
                "verbose",
            )
        }
        _run(name, flags=kwargs, **common)

    command.__doc__ = suite.summary[0].upper() + suite.summary[1:] + "."
    for pname, p in reversed(list(suite.params.items())):
        option = _param_option(pname, p)
        if option is not None:
            command = option(command)
    command = _experiment_options(command)
    return orbitbox_cli.command(name)(command)


for _name in SUITES:
    _make_command(_name)


@orbitbox_cli.command("validate-report")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
def validate_report(file: str) -> None:
    """Check a report file against the published JSON schema."""
    try:
        report_schema_validate(file)
    except ReportSchemaError as e:
        click.echo(f"❌ {file} is not a valid report: {e}", err=True)
        sys.exit(1)
    click.echo(f"✅ {file} is a valid report")


if __name__ == "__main__":
    orbitbox_cli()
