"""Fiber, mode and pulse descriptions plus the characteristic lengths.

Units are fixed throughout the package: meters, picoseconds, watts and
nanojoules. Nothing carries units at runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# nJ / ps -> W
_NJ_PER_PS_IN_W = 1.0e3


class DegenerateDispersionError(ValueError):
    """Raised when beta2 vanishes and no dispersion length exists."""


@dataclass(frozen=True)
class ModeParams:
    """Per-mode coefficients of the coupled envelope equations.

    ``delta_beta0`` and ``delta_beta1`` are offsets relative to the
    fundamental mode, so mode 1 carries zeros for both.
    """

    mode_index: int
    delta_beta0: float = 0.0  # 1/m
    delta_beta1: float = 0.0  # ps/m
    beta2: float = 0.0  # ps^2/m
    gamma_s: float = 0.0  # 1/(W m)
    gamma_c: tuple[float, ...] = ()  # 1/(W m), one entry per other mode

    def __post_init__(self):
        object.__setattr__(self, "gamma_c", tuple(float(g) for g in self.gamma_c))
        if self.mode_index < 1:
            raise ValueError("mode_index is 1-based")
        if self.mode_index == 1 and (self.delta_beta0 != 0.0 or self.delta_beta1 != 0.0):
            raise ValueError("fundamental mode must have delta_beta0 = delta_beta1 = 0")
        if self.gamma_s < 0 or any(g < 0 for g in self.gamma_c):
            raise ValueError("nonlinear coefficients must be non-negative")

    def xpm_with(self, other_index: int) -> float:
        """Cross-phase coefficient felt by this mode from mode ``other_index``."""
        if other_index == self.mode_index:
            raise ValueError("a mode has no cross-phase term with itself")
        slot = other_index - 1 if other_index < self.mode_index else other_index - 2
        return self.gamma_c[slot]


@dataclass(frozen=True)
class FiberSpec:
    length: float  # m
    modes: tuple[ModeParams, ...]
    wavelength: float = 1030.0  # nm

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.length > 0:
            raise ValueError("fiber length must be positive")
        if not self.modes:
            raise ValueError("fiber needs at least one mode")
        n = len(self.modes)
        if [m.mode_index for m in self.modes] != list(range(1, n + 1)):
            raise ValueError("mode indices must be 1..P in order")
        for m in self.modes:
            if len(m.gamma_c) != n - 1:
                raise ValueError(
                    f"mode {m.mode_index}: expected {n - 1} cross-phase coefficients, "
                    f"got {len(m.gamma_c)}"
                )

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def reference(self) -> ModeParams:
        return self.modes[0]

    @property
    def is_linear(self) -> bool:
        return all(m.gamma_s == 0 and not any(m.gamma_c) for m in self.modes)

    def with_length(self, length: float) -> "FiberSpec":
        return FiberSpec(length=length, modes=self.modes, wavelength=self.wavelength)

    def with_delta_beta0(self, values) -> "FiberSpec":
        modes = tuple(
            ModeParams(m.mode_index, float(v), m.delta_beta1, m.beta2, m.gamma_s, m.gamma_c)
            for m, v in zip(self.modes, values, strict=True)
        )
        return FiberSpec(length=self.length, modes=modes, wavelength=self.wavelength)

    def linearized(self) -> "FiberSpec":
        modes = tuple(
            ModeParams(m.mode_index, m.delta_beta0, m.delta_beta1, m.beta2, 0.0,
                       (0.0,) * len(m.gamma_c))
            for m in self.modes
        )
        return FiberSpec(length=self.length, modes=modes, wavelength=self.wavelength)

    def without_xpm(self) -> "FiberSpec":
        modes = tuple(
            ModeParams(m.mode_index, m.delta_beta0, m.delta_beta1, m.beta2, m.gamma_s,
                       (0.0,) * len(m.gamma_c))
            for m in self.modes
        )
        return FiberSpec(length=self.length, modes=modes, wavelength=self.wavelength)


@dataclass(frozen=True)
class PulseSpec:
    """Gaussian input pulse.

    ``peak_power`` is the total peak power; mode ``p`` is launched with
    amplitude ``sqrt(energy_split[p] * peak_power)``.
    """

    energy: float  # nJ
    half_width: float  # ps
    time_window: float  # ps
    energy_split: tuple[float, ...] = (1.0,)
    peak_power: float = field(default=None)  # W

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if not self.time_window > 0:
            raise ValueError("time_window must be positive")
        split = tuple(float(s) for s in self.energy_split)
        if any(s < 0 for s in split) or not math.isclose(sum(split), 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError("energy_split must be non-negative and sum to 1")
        object.__setattr__(self, "energy_split", split)
        if self.peak_power is None:
            object.__setattr__(self, "peak_power", peak_power(self.energy, self.half_width))
        if not self.peak_power > 0:
            raise ValueError("peak_power must be positive")

    @classmethod
    def uniform(cls, energy, half_width, time_window, n_modes) -> "PulseSpec":
        return cls(energy, half_width, time_window, (1.0 / n_modes,) * n_modes)

    @property
    def n_modes(self) -> int:
        return len(self.energy_split)

    def mode_amplitude(self, p: int) -> float:
        """Peak amplitude of mode ``p`` (1-based) in sqrt(W)."""
        return math.sqrt(self.energy_split[p - 1] * self.peak_power)


@dataclass(frozen=True)
class CharacteristicLengths:
    dispersion_length: float
    nonlinear_length: float

    @property
    def max_trainable(self) -> float:
        return max_trainable_length(self)


def dispersion_length(T0: float, beta2: float) -> float:
    if not T0 > 0:
        raise ValueError("T0 must be positive")
    if beta2 == 0:
        raise DegenerateDispersionError(
            "no dispersion scale: beta2 = 0, supply an explicit normalization length"
        )
    return T0 * T0 / abs(beta2)


def nonlinear_length(gamma: float, P0: float) -> float:
    """Return ``1/(gamma P0)``; ``inf`` in the linear regime."""
    if gamma < 0 or P0 < 0:
        raise ValueError("gamma and P0 must be non-negative")
    gp = gamma * P0
    if gp == 0:
        return math.inf
    return 1.0 / gp


def peak_power(E: float, T0: float) -> float:
    """Peak power of a Gaussian ``sqrt(P0) exp(-T^2 / 2 T0^2)`` carrying energy ``E``.

    The pulse energy integrates to ``P0 T0 sqrt(pi)``.
    """
    if not E > 0 or not T0 > 0:
        raise ValueError("E and T0 must be positive")
    return _NJ_PER_PS_IN_W * E / (math.sqrt(math.pi) * T0)


def pulse_energy(P0: float, T0: float) -> float:
    """Inverse of :func:`peak_power`, in nJ."""
    return P0 * T0 * math.sqrt(math.pi) / _NJ_PER_PS_IN_W


def gaussian_pulse(T, T0: float):
    if not T0 > 0:
        raise ValueError("T0 must be positive")
    return np.exp(-np.square(T) / (2.0 * T0 * T0))


def fwhm(T0: float) -> float:
    if not T0 > 0:
        raise ValueError("T0 must be positive")
    return 2.0 * math.sqrt(math.log(2.0)) * T0


def max_trainable_length(lengths: CharacteristicLengths) -> float:
    """Empirical reach of a trained network: ``min(50 L_D, 50 L_NL)``."""
    return min(50.0 * lengths.dispersion_length, 50.0 * lengths.nonlinear_length)


def characteristic_lengths(fiber: FiberSpec, pulse: PulseSpec) -> CharacteristicLengths:
    ref = fiber.reference
    return CharacteristicLengths(
        dispersion_length=dispersion_length(pulse.half_width, ref.beta2),
        nonlinear_length=nonlinear_length(ref.gamma_s, pulse.peak_power),
    )
