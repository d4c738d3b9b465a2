"""Symmetric split-step Fourier propagation of the coupled envelopes.

Transform convention: ``A(T) = (1/2pi) int A^(w) exp(-i w T) dw``, hence
``d/dT -> -i w`` and the linear operator of mode ``p`` in the spectral
domain is ``i (-db0 + db1 w + b2 w^2 / 2)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .fiber import FiberSpec, ModeParams, PulseSpec, characteristic_lengths, gaussian_pulse

log = logging.getLogger(__name__)


class NumericalFailure(RuntimeError):
    """Propagation produced non-finite values."""

    def __init__(self, step: int, message: str = ""):
        super().__init__(message or f"non-finite field at step {step}; reduce the step size")
        self.step = step


@dataclass(frozen=True)
class TimeGrid:
    n_t: int
    T_max: float

    def __post_init__(self):
        if self.n_t < 16 or self.n_t & (self.n_t - 1):
            raise ValueError("n_t must be a power of two >= 16")
        if not self.T_max > 0:
            raise ValueError("T_max must be positive")

    @property
    def dT(self) -> float:
        return self.T_max / self.n_t

    @property
    def T(self) -> np.ndarray:
        return -0.5 * self.T_max + self.dT * np.arange(self.n_t)

    @property
    def omega(self) -> np.ndarray:
        """Angular frequencies in the DFT layout (rad/ps)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_t, d=self.dT)

    def continuous_spectrum(self, field: np.ndarray) -> np.ndarray:
        """Riemann-sum approximation of ``int A(T) exp(i w T) dT`` at ``omega``."""
        k = np.fft.fftfreq(self.n_t, d=1.0 / self.n_t)
        # T_0 = -T_max/2 contributes exp(-i pi k)
        return self.dT * np.cos(np.pi * k) * dft_forward(field)


def dft_forward(field: np.ndarray) -> np.ndarray:
    """Analysis with kernel ``exp(+i w T)`` along the last axis."""
    field = np.asarray(field)
    n = field.shape[-1]
    if n < 1:
        raise ValueError("empty field")
    return np.fft.ifft(field, axis=-1) * n


def dft_inverse(spectrum: np.ndarray, n_t: int | None = None) -> np.ndarray:
    """Synthesis with kernel ``exp(-i w T)``; exact inverse of :func:`dft_forward`."""
    spectrum = np.asarray(spectrum)
    n = spectrum.shape[-1]
    if n_t is not None and n != n_t:
        raise ValueError(f"spectrum length {n} does not match grid size {n_t}")
    return np.fft.fft(spectrum, axis=-1) / n


def _linear_factors(modes, omega, h):
    """Per-mode spectral multipliers for a step ``h``, split as (global phase, w-dependent)."""
    glob = np.array([np.exp(-1j * m.delta_beta0 * h) for m in modes])
    disp = np.stack([
        np.exp(1j * h * (m.delta_beta1 * omega + 0.5 * m.beta2 * omega * omega)) for m in modes
    ])
    return glob, disp


def linear_half_step(spectra: np.ndarray, h: float, modes, omega: np.ndarray) -> np.ndarray:
    """Exact linear propagation over ``h`` in the spectral domain (phase only)."""
    if not h > 0:
        raise ValueError("step must be positive")
    glob, disp = _linear_factors(modes, omega, h)
    return spectra * disp * glob[:, None]


def _xpm_matrix(modes) -> np.ndarray:
    n = len(modes)
    g = np.zeros((n, n))
    for m in modes:
        p = m.mode_index - 1
        g[p, p] = m.gamma_s
        for other in modes:
            if other.mode_index != m.mode_index:
                g[p, other.mode_index - 1] = m.xpm_with(other.mode_index)
    return g


def nonlinear_step(fields: np.ndarray, h: float, modes) -> np.ndarray:
    """Kerr phase rotation ``A_p <- A_p exp(i h (gS |A_p|^2 + sum gC |A_n|^2))``."""
    if not h > 0:
        raise ValueError("step must be positive")
    g = _xpm_matrix(modes)
    if not g.any():
        return fields
    intensity = fields.real**2 + fields.imag**2
    return fields * np.exp(1j * h * (g @ intensity))


@dataclass(frozen=True)
class SsfConfig:
    n_z: int
    n_t: int = 4096
    checkpoint_stride: int = 1

    def __post_init__(self):
        if self.n_z < 1:
            raise ValueError("n_z must be >= 1")
        if self.checkpoint_stride < 1:
            raise ValueError("checkpoint_stride must be >= 1")


def default_steps(fiber: FiberSpec, pulse: PulseSpec) -> int:
    """``ceil(20 L / min(L_D, L_NL))`` clamped to [1000, 200000]."""
    lengths = characteristic_lengths(fiber, pulse)
    scale = min(lengths.dispersion_length, lengths.nonlinear_length)
    return int(min(200_000, max(1000, math.ceil(20.0 * fiber.length / scale))))


@dataclass
class ComplexFieldGrid:
    """Field history ``A_p(z, T)`` in sqrt(W); ``fields`` has shape (P, n_z, n_t)."""

    z: np.ndarray
    T: np.ndarray
    fields: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.T = np.asarray(self.T, dtype=float)
        self.fields = np.asarray(self.fields, dtype=complex)
        if self.fields.shape != (self.fields.shape[0], self.z.size, self.T.size):
            raise ValueError(
                f"field shape {self.fields.shape} does not match z ({self.z.size}) "
                f"x T ({self.T.size})"
            )
        if self.z.size and (self.z[0] != 0 or np.any(np.diff(self.z) <= 0)):
            raise ValueError("z checkpoints must start at 0 and increase strictly")

    @property
    def n_modes(self) -> int:
        return self.fields.shape[0]

    def final(self) -> np.ndarray:
        return self.fields[:, -1, :]

    def power(self) -> np.ndarray:
        """Total discrete L2 norm per checkpoint, summed over modes."""
        return np.sum(np.abs(self.fields) ** 2, axis=(0, 2))


def initial_fields(pulse: PulseSpec, grid: TimeGrid) -> np.ndarray:
    shape = gaussian_pulse(grid.T, pulse.half_width)
    return np.stack([pulse.mode_amplitude(p) * shape for p in range(1, pulse.n_modes + 1)]).astype(
        complex
    )


def check_window(initial: np.ndarray, tol: float = 1e-6) -> bool:
    peak = np.max(np.abs(initial))
    edge = max(np.max(np.abs(initial[..., :2])), np.max(np.abs(initial[..., -2:])))
    return edge <= tol * peak


def propagate(
    initial: np.ndarray,
    fiber: FiberSpec,
    cfg: SsfConfig,
    T_max: float,
) -> ComplexFieldGrid:
    """Propagate ``initial`` (shape (P, n_t)) over the fiber length.

    Each step applies half a linear step, a full nonlinear step and another
    half linear step.  Checkpoints are stored every ``checkpoint_stride``
    steps and always at ``z = L``.
    """
    initial = np.atleast_2d(np.asarray(initial, dtype=complex))
    grid = TimeGrid(cfg.n_t, T_max)
    if initial.shape != (fiber.n_modes, cfg.n_t):
        raise ValueError(
            f"initial field shape {initial.shape}, expected {(fiber.n_modes, cfg.n_t)}"
        )
    modes: tuple[ModeParams, ...] = fiber.modes
    h = fiber.length / cfg.n_z
    omega = grid.omega
    glob, disp = _linear_factors(modes, omega, 0.5 * h)
    half = disp * glob[:, None]
    g = _xpm_matrix(modes)
    nonlinear = bool(g.any())

    zs = [0.0]
    history = [initial.copy()]
    spec = dft_forward(initial)
    for step in range(1, cfg.n_z + 1):
        spec = spec * half
        if nonlinear:
            a = dft_inverse(spec)
            a = a * np.exp(1j * h * (g @ (a.real**2 + a.imag**2)))
            spec = dft_forward(a)
        spec = spec * half
        if step % cfg.checkpoint_stride == 0 or step == cfg.n_z:
            a = dft_inverse(spec)
            if not np.all(np.isfinite(a)):
                raise NumericalFailure(step)
            zs.append(step * h if step < cfg.n_z else fiber.length)
            history.append(a)
        elif not np.isfinite(spec[0, 0]):
            raise NumericalFailure(step)

    out = ComplexFieldGrid(np.array(zs), grid.T, np.stack(history, axis=1))
    if not check_window(out.fields):
        log.warning("field exceeds 1e-6 of peak at the window edge; widen T_max")
    return out
