"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 tolerance failure.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import tables
from .config import apply_overrides, build_config, load_raw
from .network import NonFiniteError
from .pinn import TrainingDiverged
from .runner import ToleranceFailure, run_experiment
from .ssf import NumericalFailure

EXIT_CONFIG, EXIT_NUMERICAL, EXIT_TOLERANCE = 2, 3, 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def exit_code(exc: BaseException) -> int | None:
    if isinstance(exc, (NumericalFailure, TrainingDiverged, NonFiniteError)):
        return EXIT_NUMERICAL
    if isinstance(exc, ToleranceFailure):
        return EXIT_TOLERANCE
    if isinstance(exc, ValueError):  # ConfigError and domain errors such as grid mismatch
        return EXIT_CONFIG
    return None


def _guarded(fn, *args):
    try:
        return fn(*args)
    except Exception as exc:
        code = exit_code(exc)
        if code is None:
            raise
        _fail(code, str(exc))


def _isolate(configs):
    """Give every config its own output directory."""
    seen = {}
    for cfg in configs:
        key = Path(cfg.output).resolve()
        if key in seen:
            seen[key] += 1
            cfg.output = Path(f"{cfg.output}-{seen[key]}")
        else:
            seen[key] = 0
    return configs


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Split-step and PINN solvers for coupled multimode pulse propagation."""


@main.command("tables")
def tables_cmd():
    """Recompute the published coefficient tables and check tolerances."""
    cells = tables.all_cells()
    click.echo(tables.format_report(cells))
    if any(not c.ok for c in cells):
        sys.exit(EXIT_TOLERANCE)


@main.command()
@click.argument("configs", nargs=-1, required=True, type=click.Path())
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override a config field, e.g. train.max_iterations=200.")
@click.option("--kind", type=str, default=None, help="Override the run kind.")
@click.option("--output", type=click.Path(), default=None, help="Output directory.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Run several configs concurrently.")
def run(configs, overrides, kind, output, jobs):
    """Run one or more experiment configs."""
    extra = list(overrides)
    if kind is not None:
        extra.append(f"kind={kind}")
    if output is not None and len(configs) == 1:
        extra.append(f"output={output}")

    def load(path):
        return build_config(apply_overrides(load_raw(path), extra))

    built = _isolate([_guarded(load, p) for p in configs])
    if jobs < 1:
        _fail(EXIT_CONFIG, "--jobs must be >= 1")

    def one(cfg):
        try:
            return cfg, run_experiment(cfg), None
        except Exception as exc:  # reported per job below
            return cfg, None, exc

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(one, built))
    worst = 0
    for cfg, res, exc in results:
        if exc is None:
            click.echo(f"{cfg.output}: ok")
            click.echo(json.dumps(res, indent=2, default=float))
            continue
        code = exit_code(exc)
        if code is None:
            raise exc
        click.echo(f"{cfg.output}: error: {exc}", err=True)
        worst = max(worst, code)
    sys.exit(worst)


@main.command()
@click.argument("candidate", type=click.Path(exists=True))
@click.argument("reference", type=click.Path(exists=True))
@click.option("--output", type=click.Path(), default="runs/compare", show_default=True)
@click.option("--preset", default=None, help="Preset whose peak power normalizes the MSEs.")
@click.option("--max-mse", type=float, default=None, help="Fail with exit 4 above this MSE.")
def compare(candidate, reference, output, preset, max_mse):
    """Compare a checkpoint or field file against a reference field file."""
    raw = {"kind": "compare", "output": output,
           "compare": {"checkpoint": candidate, "reference": reference}}
    if preset is not None:
        raw["preset"] = preset
    if max_mse is not None:
        raw["compare"]["max_mse"] = max_mse
    cfg = _guarded(build_config, raw)
    res = _guarded(run_experiment, cfg)
    click.echo(json.dumps(res, indent=2))


if __name__ == "__main__":
    main()
