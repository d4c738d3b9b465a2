"""Frame change, normalized coefficients and the delta-beta0 scaling.

Governing equation for the envelope of mode ``p`` (physical units)::

    dA/dz = -i db0 A - db1 dA/dT - i (b2/2) d2A/dT2
            + i (gS |A_p|^2 + sum_n gC_n |A_n|^2) A

With ``z = L zeta``, ``T = T_max t`` and ``A = sqrt(P0) U`` this becomes::

    i dU/dzeta - a0 U + i a1 dU/dt + a2 d2U/dt2
        + (a_spm |U_p|^2 + sum_n a_xpm_n |U_n|^2) U = 0

with ``a0 = L db0``, ``a1 = L db1 / T_max``, ``a2 = -L b2 / (2 T_max^2)``,
``a_spm = L gS P0`` and ``a_xpm_n = L gC_n P0``.  In terms of the frame
factors ``k1 = L / L_D`` and ``k2 = T_max / T0`` these are ``a2 = k1 c / k2^2``
and ``a_spm = k1 d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .fiber import FiberSpec, PulseSpec, dispersion_length, nonlinear_length

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class FrameFactors:
    k1: float
    k2: float
    L_D: float
    T0: float

    @property
    def L_ref(self) -> float:
        return self.k1 * self.L_D

    @property
    def T_ref(self) -> float:
        return self.k2 * self.T0

    def to_normalized(self, z, T):
        return np.asarray(z) / self.L_ref, np.asarray(T) / self.T_ref

    def to_physical(self, zeta, t):
        return np.asarray(zeta) * self.L_ref, np.asarray(t) * self.T_ref


def frame_factors(L_max: float, L_D: float, T_max: float, T0: float) -> FrameFactors:
    if min(L_max, L_D, T_max, T0) <= 0:
        raise ValueError("frame inputs must be positive")
    return FrameFactors(k1=L_max / L_D, k2=T_max / T0, L_D=L_D, T0=T0)


def frame_for(fiber: FiberSpec, pulse: PulseSpec) -> FrameFactors:
    L_D = dispersion_length(pulse.half_width, fiber.reference.beta2)
    return frame_factors(fiber.length, L_D, pulse.time_window, pulse.half_width)


@dataclass(frozen=True)
class ScaledBeta0:
    original: float
    scaled: float
    l_prime: int
    z_ref: float

    @property
    def period(self) -> float:
        return TWO_PI / self.z_ref


def scale_beta0(delta_beta0: float, z: float) -> ScaledBeta0:
    """Fold ``delta_beta0`` into ``(-2 pi / z, 2 pi / z)`` by whole periods.

    The solution at distance ``z`` is periodic in ``delta_beta0`` with
    period ``2 pi / z``; ``l'`` cancels the integer part of
    ``delta_beta0 z / 2 pi`` (truncated toward zero).
    """
    if not z > 0:
        raise ValueError("scaling distance must be positive")
    l_prime = -math.trunc(delta_beta0 * z / TWO_PI)
    scaled = delta_beta0 + (TWO_PI / z) * l_prime
    return ScaledBeta0(float(delta_beta0), scaled, int(l_prime), float(z))


def periodic_shift_equivalence(delta_beta0: float, z: float, l: int) -> float:
    if not z > 0:
        raise ValueError("z must be positive")
    return delta_beta0 + (TWO_PI / z) * l


def restore_phase(re0, im0, delta_beta0: float, z):
    """Rotate the ``delta_beta0 = 0`` field by ``-delta_beta0 z``."""
    phi = -delta_beta0 * np.asarray(z, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    return re0 * c - im0 * s, re0 * s + im0 * c


@dataclass(frozen=True)
class NormalizedSystem:
    """Coefficients of the normalized coupled equations, one entry per mode."""

    a0: tuple[float, ...]
    a1: tuple[float, ...]
    a2: tuple[float, ...]
    a_spm: tuple[float, ...]
    a_xpm: tuple[tuple[float, ...], ...]  # a_xpm[p][n], zero on the diagonal
    c: float
    d: float
    frame: FrameFactors
    amplitudes: tuple[float, ...]  # initial peak of U_p, sqrt(energy split)
    scaled: bool = False

    @property
    def n_modes(self) -> int:
        return len(self.a0)

    def with_a2_sign_flipped(self) -> "NormalizedSystem":
        return replace(self, a2=tuple(-v for v in self.a2))

    def with_a0(self, a0) -> "NormalizedSystem":
        return replace(self, a0=tuple(float(v) for v in a0))


def normalized_coefficients(
    fiber: FiberSpec,
    pulse: PulseSpec,
    frame: FrameFactors | None = None,
    scaling: bool = False,
) -> NormalizedSystem:
    if pulse.n_modes != fiber.n_modes:
        raise ValueError(
            f"pulse splits energy over {pulse.n_modes} modes, fiber has {fiber.n_modes}"
        )
    if frame is None:
        frame = frame_for(fiber, pulse)
    ref = fiber.reference
    L = frame.L_ref
    T_ref = frame.T_ref
    P0 = pulse.peak_power

    c = -math.copysign(0.5, ref.beta2) if ref.beta2 != 0 else 0.0
    L_NL = nonlinear_length(ref.gamma_s, P0)
    d = 0.0 if math.isinf(L_NL) else frame.L_D / L_NL

    a0, a1, a2, a_spm, a_xpm = [], [], [], [], []
    for m in fiber.modes:
        db0 = scale_beta0(m.delta_beta0, fiber.length).scaled if scaling else m.delta_beta0
        a0.append(L * db0)
        a1.append(L * m.delta_beta1 / T_ref)
        a2.append(-L * m.beta2 / (2.0 * T_ref * T_ref))
        a_spm.append(L * m.gamma_s * P0)
        row = []
        for n in fiber.modes:
            row.append(0.0 if n.mode_index == m.mode_index
                       else L * m.xpm_with(n.mode_index) * P0)
        a_xpm.append(tuple(row))
    amps = tuple(math.sqrt(s) for s in pulse.energy_split)
    return NormalizedSystem(
        a0=tuple(a0), a1=tuple(a1), a2=tuple(a2), a_spm=tuple(a_spm),
        a_xpm=tuple(a_xpm), c=c, d=d, frame=frame, amplitudes=amps, scaled=scaling,
    )
