"""Dispatch of configured experiments and the artifacts they leave on disk."""

from __future__ import annotations

import json
import logging
import math
import platform
from pathlib import Path

import numpy as np

from . import __version__, tables
from .analytic import AnalyticQuery, linear_multimode
from .config import ExperimentConfig
from .fieldio import read_field, write_field
from .network import load_checkpoint, save_checkpoint, xavier_init
from .pinn import field_mse, mse_vs_reference, network_field, train
from .ssf import ComplexFieldGrid, SsfConfig, TimeGrid, initial_fields, propagate
from .transforms import FrameFactors, normalized_coefficients, scale_beta0

log = logging.getLogger(__name__)


class ToleranceFailure(RuntimeError):
    """A reproduced quantity fell outside its documented tolerance."""


def _versions() -> dict:
    return {"mmnlse": __version__, "numpy": np.__version__, "python": platform.python_version()}


def write_manifest(cfg: ExperimentConfig, out: Path, extra: dict | None = None) -> None:
    manifest = {
        "kind": cfg.kind,
        "config": cfg.raw,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "versions": _versions(),
    }
    manifest.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True,
                                                  default=str))


def _field_name(cfg) -> str:
    return "field.csv" if cfg.field_format == "csv" else "field.bin"


def analytic_field(fiber, pulse, z, T) -> ComplexFieldGrid:
    """Closed-form linear history on the given grid, in sqrt(W)."""
    if not fiber.is_linear:
        raise ValueError("closed-form solution exists only without Kerr terms")
    fields = []
    for m in fiber.modes:
        q = AnalyticQuery(np.asarray(z)[:, None], np.asarray(T)[None, :], pulse.half_width,
                          m.beta2, m.delta_beta0, m.delta_beta1)
        fields.append(pulse.mode_amplitude(m.mode_index) * linear_multimode(q))
    return ComplexFieldGrid(z, T, np.stack(fields))


def _checkpoint_z(fiber, ssf: SsfConfig) -> np.ndarray:
    h = fiber.length / ssf.n_z
    steps = list(range(0, ssf.n_z, ssf.checkpoint_stride)) + [ssf.n_z]
    z = np.array(steps, dtype=float) * h
    z[-1] = fiber.length
    return z


def run_analytic(cfg: ExperimentConfig, out: Path) -> dict:
    grid = TimeGrid(cfg.ssf.n_t, cfg.pulse.time_window)
    field = analytic_field(cfg.fiber, cfg.pulse, _checkpoint_z(cfg.fiber, cfg.ssf), grid.T)
    write_field(out / _field_name(cfg), field)
    return {"n_modes": field.n_modes, "n_z": field.z.size, "n_t": field.T.size}


def run_ssf(cfg: ExperimentConfig, out: Path) -> dict:
    grid = TimeGrid(cfg.ssf.n_t, cfg.pulse.time_window)
    field = propagate(initial_fields(cfg.pulse, grid), cfg.fiber, cfg.ssf, grid.T_max)
    write_field(out / _field_name(cfg), field)
    power = field.power()
    drift = float(np.max(np.abs(power - power[0])) / power[0])
    return {"n_modes": field.n_modes, "n_z": field.z.size, "n_t": field.T.size,
            "l2_relative_drift": drift}


def reference_field(cfg: ExperimentConfig, n_z: int = 51, n_t: int | None = None):
    """Validation field over the whole normalized domain.

    Closed form for linear fibers, otherwise a split-step run.
    """
    n_t = n_t or cfg.ssf.n_t
    grid = TimeGrid(n_t, cfg.pulse.time_window)
    if cfg.fiber.is_linear:
        z = np.linspace(0.0, cfg.fiber.length, n_z)
        return analytic_field(cfg.fiber, cfg.pulse, z, grid.T)
    stride = max(1, cfg.ssf.n_z // (n_z - 1))
    ssf = SsfConfig(n_z=stride * (n_z - 1), n_t=n_t, checkpoint_stride=stride)
    return propagate(initial_fields(cfg.pulse, grid), cfg.fiber, ssf, grid.T_max)


def phase_offsets(fiber, scaling: bool) -> np.ndarray | None:
    """``delta_beta0 - scaled delta_beta0`` per mode, or None without scaling."""
    if not scaling:
        return None
    return np.array([m.delta_beta0 - scale_beta0(m.delta_beta0, fiber.length).scaled
                     for m in fiber.modes])


def run_train(cfg: ExperimentConfig, out: Path) -> dict:
    coeffs = normalized_coefficients(cfg.fiber, cfg.pulse, scaling=cfg.scaling)
    state = xavier_init(cfg.network, cfg.train.seed)

    def progress(it, report):
        if it % 500 == 0:
            log.info("iteration %d loss %.6g lr %.3g", it, report.total[-1], report.lr[-1])

    state, report = train(cfg.network, state, coeffs, cfg.train, callback=progress)
    report.to_csv(out / "loss.csv")
    offsets = phase_offsets(cfg.fiber, cfg.scaling)
    frame = coeffs.frame
    meta = {
        "iterations": len(report.iterations),
        "final_loss": report.total[-1],
        "stop_reason": report.stop_reason,
        "frame": {"k1": frame.k1, "k2": frame.k2, "L_D": frame.L_D, "T0": frame.T0},
        "peak_power": cfg.pulse.peak_power,
        "phase_offsets": None if offsets is None else offsets.tolist(),
        "scaling": cfg.scaling,
    }
    save_checkpoint(out / "network.ckpt", state, meta)
    ref = reference_field(cfg, cfg.reference.get("n_z", 51), cfg.reference.get("n_t"))
    report.mse = mse_vs_reference(state, ref, frame, cfg.pulse, offsets)
    return {"final_loss": report.total[-1], "stop_reason": report.stop_reason,
            "wall_time": report.wall_time, "mse": report.mse}


def _is_field_file(path: Path) -> bool:
    with open(path, "rb") as fh:
        head = fh.read(4)
    return path.suffix == ".csv" or head == b"MMFG"


def compare_fields(candidate: ComplexFieldGrid, reference: ComplexFieldGrid) -> list[dict]:
    if candidate.fields.shape != reference.fields.shape:
        raise ValueError(
            f"grid mismatch: candidate {candidate.fields.shape} (modes, z, T) vs "
            f"reference {reference.fields.shape}"
        )
    if not (np.allclose(candidate.z, reference.z) and np.allclose(candidate.T, reference.T)):
        raise ValueError("grid mismatch: candidate and reference sample different (z, T)")
    return field_mse(candidate.fields, reference.fields)


def network_on_grid(ckpt: Path, reference: ComplexFieldGrid) -> ComplexFieldGrid:
    """Evaluate a trained checkpoint on the reference grid, in sqrt(W)."""
    state, meta = load_checkpoint(ckpt)
    P = state.spec.n_outputs // 2
    if P != reference.n_modes:
        raise ValueError(f"grid mismatch: network has {P} modes, reference has "
                         f"{reference.n_modes}")
    frame = FrameFactors(**meta["frame"])
    zeta, t = frame.to_normalized(reference.z, reference.T)
    U = network_field(state, zeta, t)
    if meta.get("phase_offsets") is not None:
        U = U * np.exp(-1j * np.outer(meta["phase_offsets"], reference.z))[:, :, None]
    return ComplexFieldGrid(reference.z, reference.T, U * math.sqrt(meta["peak_power"]))


def write_error_grid(path, candidate: ComplexFieldGrid, reference: ComplexFieldGrid) -> None:
    """Per-(z, T) errors with columns ``z, T, mode, abs_err, re_err, im_err``."""
    P, n_z, n_t = reference.fields.shape
    d = candidate.fields - reference.fields
    abs_err = np.abs(candidate.fields) - np.abs(reference.fields)
    cols = [
        np.tile(np.repeat(reference.z, n_t), P),
        np.tile(reference.T, P * n_z),
        np.repeat(np.arange(1, P + 1), n_z * n_t),
        abs_err.ravel(), d.real.ravel(), d.imag.ravel(),
    ]
    np.savetxt(path, np.column_stack(cols), delimiter=",", comments="",
               header="z,T,mode,abs_err,re_err,im_err",
               fmt=["%.17g", "%.17g", "%d", "%.17g", "%.17g", "%.17g"])


def run_compare(cfg: ExperimentConfig, out: Path) -> dict:
    reference = read_field(cfg.compare["reference"])
    cand_path = Path(cfg.compare["checkpoint"])
    if _is_field_file(cand_path):
        candidate = read_field(cand_path)
    else:
        candidate = network_on_grid(cand_path, reference)
    metrics = compare_fields(candidate, reference)
    # MSEs in normalized units when the peak power is known
    if cfg.pulse is not None:
        scale = cfg.pulse.peak_power
        for m in metrics:
            m["mse_abs_normalized"] = m["mse_abs"] / scale
    write_error_grid(out / "errors.csv", candidate, reference)
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2))
    limit = cfg.compare.get("max_mse")
    if limit is not None:
        key = "mse_abs_normalized" if cfg.pulse is not None else "mse_abs"
        worst = max(m[key] for m in metrics)
        if worst > limit:
            raise ToleranceFailure(f"MSE {worst:.3g} exceeds {limit:g}")
    return {"mse": metrics}


def run_tables(cfg: ExperimentConfig, out: Path) -> dict:
    cells = tables.all_cells()
    report = tables.format_report(cells)
    (out / "tables.txt").write_text(report + "\n")
    n_fail = sum(not c.ok for c in cells)
    if n_fail:
        raise ToleranceFailure(f"{n_fail} table cells outside tolerance")
    return {"cells": len(cells), "failed": n_fail}


_DISPATCH = {"analytic": run_analytic, "ssf": run_ssf, "train": run_train,
             "compare": run_compare, "tables": run_tables}


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run ``cfg`` and write its outputs, manifest and log under ``cfg.output``."""
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    pkg_log = logging.getLogger("mmnlse")
    pkg_log.addHandler(handler)
    pkg_log.setLevel(logging.INFO)
    try:
        write_manifest(cfg, out)
        result = _DISPATCH[cfg.kind](cfg, out)
        (out / "result.json").write_text(json.dumps(result, indent=2, default=float))
        return result
    finally:
        pkg_log.removeHandler(handler)
        handler.close()
