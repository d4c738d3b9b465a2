"""Closed-form solutions of the linear equations.

These serve as ground truth for the split-step propagator, the scaling
transformation and small trained networks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .transforms import NormalizedSystem


@dataclass(frozen=True)
class AnalyticQuery:
    z: float | np.ndarray
    T: float | np.ndarray
    T0: float
    beta2: float
    delta_beta0: float = 0.0
    delta_beta1: float = 0.0

    def __post_init__(self):
        if not self.T0 > 0:
            raise ValueError("T0 must be positive")


def _dispersed_gaussian(z, T, T0, beta2):
    # principal branch; Re(T0^2 - i b2 z) = T0^2 > 0 keeps the root off the cut
    s = T0 * T0 - 1j * beta2 * np.asarray(z, dtype=float)
    T = np.asarray(T, dtype=float)
    return T0 / np.sqrt(s) * np.exp(-T * T / (2.0 * s))


def linear_single_mode(q: AnalyticQuery):
    """Unit-peak Gaussian after pure group-velocity dispersion."""
    if q.delta_beta0 != 0:
        raise ValueError("single-mode solution requires delta_beta0 = 0")
    T = np.asarray(q.T, dtype=float) - q.delta_beta1 * np.asarray(q.z, dtype=float)
    return _dispersed_gaussian(q.z, T, q.T0, q.beta2)


def linear_multimode(q: AnalyticQuery):
    """Linear solution of a higher-order mode.

    The ``delta_beta0`` term only contributes the factor
    ``exp(-i delta_beta0 z)``; ``delta_beta1`` translates the pulse by
    ``delta_beta1 z`` in ``T``.
    """
    z = np.asarray(q.z, dtype=float)
    T = np.asarray(q.T, dtype=float) - q.delta_beta1 * z
    return np.exp(-1j * q.delta_beta0 * z) * _dispersed_gaussian(z, T, q.T0, q.beta2)


def gaussian_spectrum(omega, T0: float):
    """Spectrum of the unit Gaussian, normalized so that its peak is ``T0``.

    The continuous transform ``int A e^{i w T} dT`` equals
    ``sqrt(2 pi)`` times this.
    """
    if not T0 > 0:
        raise ValueError("T0 must be positive")
    omega = np.asarray(omega, dtype=float)
    return T0 * np.exp(-0.5 * T0 * T0 * omega * omega)


def _d1(f, x, h):
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


def _d2(f, x, h):
    return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) / (
        12 * h * h
    )


def normalized_residual_of_analytic(
    coeffs: NormalizedSystem,
    q: AnalyticQuery,
    mode: int = 1,
    n_probe: int = 64,
) -> float:
    """Max |residual| of the normalized linear operator on the closed form.

    The closed form is built from ``q`` (``T0``, ``beta2``, ``delta_beta0``,
    ``delta_beta1``) and mapped to ``(zeta, t)`` with the frame of
    ``coeffs``; derivatives use fourth-order central differences.  A
    correctly assembled operator annihilates it up to truncation error.
    """
    p = mode - 1
    frame = coeffs.frame
    L, T_ref = frame.L_ref, frame.T_ref
    amp = coeffs.amplitudes[p]

    def U(zeta, t):
        return amp * linear_multimode(
            AnalyticQuery(zeta * L, t * T_ref, q.T0, q.beta2, q.delta_beta0, q.delta_beta1)
        )

    width = q.T0 * math.sqrt(1.0 + (q.beta2 * L / q.T0**2) ** 2)
    shift = abs(q.delta_beta1) * L
    t_half = min(0.5, (5.0 * width + shift) / T_ref)
    zeta = np.linspace(0.0, 1.0, n_probe)[:, None]
    t = np.linspace(-t_half, t_half, n_probe)[None, :]

    a0, a1, a2 = coeffs.a0[p], coeffs.a1[p], coeffs.a2[p]
    h_t = 0.005 * q.T0 / T_ref
    h_z = 0.005 / max(1.0, abs(a0), frame.k1, abs(a1) * T_ref / q.T0)

    u = U(zeta, t)
    u_z = _d1(lambda s: U(s, t), zeta, h_z)
    u_t = _d1(lambda s: U(zeta, s), t, h_t)
    u_tt = _d2(lambda s: U(zeta, s), t, h_t)
    r = 1j * u_z - a0 * u + 1j * a1 * u_t + a2 * u_tt
    return float(np.max(np.abs(r)))
