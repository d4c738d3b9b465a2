"""Experiment configuration: a YAML file, dotted overrides and validation.

Schema (every section optional unless the run kind needs it)::

    kind: ssf            # analytic | ssf | train | compare | tables
    preset: case1        # base values for fiber, pulse, network and train
    seed: 0
    scaling: true        # train on scaled delta-beta0
    output: runs/case1
    fiber:  {length, n_modes, nonlinear, xpm, modes: [{delta_beta0, ...}]}
    pulse:  {energy, half_width, time_window, energy_split}
    ssf:    {n_z, n_t, checkpoint_stride, format}
    network: {n_blocks, width, activation}
    train:  {any TrainConfig field}
    compare: {checkpoint, reference}
    reference: {n_z, n_t}  # grid of the validation field after training

Only ``MMNLSE_OUTPUT_DIR`` and ``MMNLSE_THREADS`` are read from the
environment.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import presets
from .fiber import FiberSpec, ModeParams, PulseSpec
from .network import NetworkSpec
from .pinn import TrainConfig
from .ssf import SsfConfig, default_steps

KINDS = ("analytic", "ssf", "train", "compare", "tables")
_TOP = {"kind", "preset", "seed", "scaling", "output", "fiber", "pulse", "ssf", "network",
        "train", "compare", "reference"}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass
class ExperimentConfig:
    kind: str
    fiber: FiberSpec | None
    pulse: PulseSpec | None
    ssf: SsfConfig | None
    network: NetworkSpec
    train: TrainConfig
    scaling: bool
    output: Path
    seed: int
    preset: str | None = None
    field_format: str = "bin"
    compare: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``a.b.c=value`` strings; values are parsed as YAML scalars."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like key.path=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for i, p in enumerate(parts[:-1]):
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(".".join(parts[: i + 1]), "is not a section")
        node[parts[-1]] = yaml.safe_load(value)
    return out


def load_raw(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(str(path), "config file does not exist")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"invalid YAML ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(str(path), "top level must be a mapping")
    return raw


def _section(raw, name) -> dict:
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be a mapping")
    return sec


def _build(cls, values: dict, path: str, base=None):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
    values = dict(values)
    for k, v in values.items():
        if isinstance(v, list):
            values[k] = tuple(v)
    try:
        return dataclasses.replace(base, **values) if base is not None else cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def _fiber(sec: dict, preset) -> FiberSpec | None:
    if not sec and preset is None:
        return None
    sec = dict(sec)
    modes = sec.pop("modes", None)
    allowed = {"length", "n_modes", "nonlinear", "xpm", "wavelength"}
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"fiber.{sorted(unknown)[0]}", "unknown field")
    length = sec.get("length", preset.length if preset else None)
    if length is None:
        raise ConfigError("fiber.length", "required")
    try:
        if modes is not None:
            built = []
            for i, m in enumerate(modes):
                built.append(_build(ModeParams, {"mode_index": i + 1, **m}, f"fiber.modes[{i}]"))
            return FiberSpec(float(length), tuple(built), sec.get("wavelength", presets.WAVELENGTH))
        return presets.canonical_fiber(
            float(length),
            sec.get("n_modes", preset.n_modes if preset else 3),
            sec.get("nonlinear", preset.nonlinear if preset else False),
            sec.get("xpm", preset.xpm if preset else False),
        )
    except ValueError as exc:
        raise ConfigError("fiber", str(exc)) from None


def _pulse(sec: dict, preset, n_modes) -> PulseSpec | None:
    if not sec and preset is None:
        return None
    allowed = {"energy", "half_width", "time_window", "energy_split"}
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"pulse.{sorted(unknown)[0]}", "unknown field")
    energy = sec.get("energy", preset.energy if preset else None)
    if energy is None:
        raise ConfigError("pulse.energy", "required")
    window = sec.get("time_window", preset.time_window if preset else presets.T_MAX)
    split = sec.get("energy_split", (1.0 / n_modes,) * n_modes)
    try:
        return PulseSpec(float(energy), float(sec.get("half_width", presets.T0)), float(window),
                         tuple(split))
    except ValueError as exc:
        raise ConfigError("pulse", str(exc)) from None


def build_config(raw: dict, env=None) -> ExperimentConfig:
    env = os.environ if env is None else env
    unknown = set(raw) - _TOP
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown section")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError("kind", f"must be one of {', '.join(KINDS)}, got {kind!r}")
    preset = None
    if raw.get("preset") is not None:
        try:
            preset = presets.get_preset(raw["preset"])
        except KeyError as exc:
            raise ConfigError("preset", exc.args[0]) from None
    seed = raw.get("seed", preset.train.seed if preset else 0)
    if not isinstance(seed, int):
        raise ConfigError("seed", "must be an integer")

    fiber = _fiber(_section(raw, "fiber"), preset)
    pulse = _pulse(_section(raw, "pulse"), preset, fiber.n_modes if fiber else 1)
    if kind in ("analytic", "ssf", "train"):
        if fiber is None:
            raise ConfigError("fiber", f"kind {kind!r} needs a fiber section or a preset")
        if pulse is None:
            raise ConfigError("pulse.energy", f"kind {kind!r} needs a pulse section or a preset")
    if fiber is not None and pulse is not None and pulse.n_modes != fiber.n_modes:
        raise ConfigError("pulse.energy_split", f"needs {fiber.n_modes} entries")

    ssf = None
    ssf_sec = dict(_section(raw, "ssf"))
    field_format = ssf_sec.pop("format", "bin")
    if field_format not in ("bin", "csv"):
        raise ConfigError("ssf.format", "must be bin or csv")
    if fiber is not None and pulse is not None:
        if "n_z" not in ssf_sec:
            ssf_sec["n_z"] = default_steps(fiber, pulse)
        ssf = _build(SsfConfig, ssf_sec, "ssf")

    net_sec = dict(_section(raw, "network"))
    base_net = preset.network if preset else NetworkSpec()
    if fiber is not None and "n_outputs" not in net_sec:
        net_sec["n_outputs"] = 2 * fiber.n_modes
    network = _build(NetworkSpec, net_sec, "network", base_net)

    train_sec = dict(_section(raw, "train"))
    train_sec.setdefault("seed", seed)
    if "MMNLSE_THREADS" in env and "workers" not in train_sec:
        try:
            train_sec["workers"] = int(env["MMNLSE_THREADS"])
        except ValueError:
            raise ConfigError("MMNLSE_THREADS", "must be an integer") from None
    train = _build(TrainConfig, train_sec, "train", preset.train if preset else TrainConfig())

    output = Path(env.get("MMNLSE_OUTPUT_DIR") or raw.get("output") or "runs/" + (
        raw.get("preset") or kind))

    if kind == "analytic" and not fiber.is_linear:
        raise ConfigError("fiber.nonlinear", "closed-form solution exists only without Kerr terms")
    compare = _section(raw, "compare")
    if kind == "compare":
        for key in ("checkpoint", "reference"):
            if key not in compare:
                raise ConfigError(f"compare.{key}", "required")
            if not Path(compare[key]).exists():
                raise ConfigError(f"compare.{key}", f"file {compare[key]} does not exist")

    return ExperimentConfig(
        kind=kind, fiber=fiber, pulse=pulse, ssf=ssf, network=network, train=train,
        scaling=bool(raw.get("scaling", True)), output=output, seed=seed,
        preset=raw.get("preset"), field_format=field_format, compare=dict(compare),
        reference=dict(_section(raw, "reference")), raw=raw,
    )


def load_config(path, overrides=(), env=None) -> ExperimentConfig:
    return build_config(apply_overrides(load_raw(path), overrides), env)
