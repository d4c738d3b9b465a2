"""Collocation sampling, residual losses and the training loop."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .fiber import PulseSpec
from .network import NetworkSpec, NetworkState, evaluate, loss_gradient
from .transforms import FrameFactors, NormalizedSystem

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    def __init__(self, iteration: int, report: "TrainReport"):
        super().__init__(f"non-finite loss at iteration {iteration}")
        self.iteration = iteration
        self.report = report


@dataclass(frozen=True)
class TrainConfig:
    n_interior: int = 240_000
    n_boundary: int = 2000
    batch_size: int = 8192  # 0 selects full batch
    max_iterations: int = 10_000
    learning_rate: float = 1e-3
    factor: float = 0.9
    patience: int = 30
    min_lr: float = 1e-7
    threshold: float = 1e-4
    w_pde: float = 1.0
    w_ic: float = 1.0
    corridor_fraction: float = 0.9
    corridor_half: float = 0.25
    seed: int = 0
    workers: int = 1
    deterministic: bool = True
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if not 0 < self.factor < 1:
            raise ValueError("scheduler factor must lie in (0, 1)")
        if not self.min_lr > 0:
            raise ValueError("min_lr must be positive")
        if self.n_interior < 1 or self.n_boundary < 1:
            raise ValueError("point counts must be positive")
        if not 0 <= self.corridor_fraction <= 1:
            raise ValueError("corridor_fraction must lie in [0, 1]")
        if not 0 < self.corridor_half <= 0.5:
            raise ValueError("corridor_half must lie in (0, 1/2]")


@dataclass
class CollocationSet:
    t: np.ndarray
    zeta: np.ndarray
    t_ic: np.ndarray
    seed: int


def _sample_t(rng, n, fraction, half):
    if fraction == 0:
        return rng.uniform(-0.5, 0.5, n)
    n_in = int(round(fraction * n))
    inner = rng.uniform(-half, half, n_in)
    # outer band [-1/2, -half) U (half, 1/2] folded onto [0, 1 - 2 half)
    u = rng.uniform(0.0, 1.0 - 2.0 * half, n - n_in)
    outer = np.where(u < 0.5 - half, -0.5 + u, half + (u - (0.5 - half)))
    t = np.concatenate([inner, outer])
    return t[rng.permutation(n)]


def sample_collocation(cfg: TrainConfig, seed: int | None = None) -> CollocationSet:
    """Interior points uniform in zeta with a dense central corridor in t.

    A fraction ``corridor_fraction`` of the t-samples is uniform on
    ``[-corridor_half, corridor_half]``, the rest uniform on the remainder of
    ``[-1/2, 1/2]``; a fraction of zero disables the corridor and samples
    ``[-1/2, 1/2]`` uniformly.  Boundary points at ``zeta = 0`` follow the
    same rule.
    """
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    t = _sample_t(rng, cfg.n_interior, cfg.corridor_fraction, cfg.corridor_half)
    zeta = rng.uniform(0.0, 1.0, cfg.n_interior)
    t_ic = _sample_t(rng, cfg.n_boundary, cfg.corridor_fraction, cfg.corridor_half)
    return CollocationSet(t, zeta, t_ic, seed)


# residuals -------------------------------------------------------------------


def pde_residual(jets, coeffs: NormalizedSystem):
    """Squared residual of the normalized equations, summed over modes.

    ``jets`` provides ``v, t, tt, z`` with one column per network output
    (numpy arrays or Tensors).  For ``U = u + i w`` the complex residual
    ``i U_zeta - a0 U + i a1 U_t + a2 U_tt + N U`` splits into

        Re: -w_zeta - a0 u - a1 w_t + a2 u_tt + N u
        Im:  u_zeta - a0 w + a1 u_t + a2 w_tt + N w
    """
    P = coeffs.n_modes

    def col(x, k):
        return x[:, k]

    u = [col(jets.v, 2 * p) for p in range(P)]
    w = [col(jets.v, 2 * p + 1) for p in range(P)]
    nonlinear = any(coeffs.a_spm) or any(any(r) for r in coeffs.a_xpm)
    if nonlinear:
        intensity = [u[p] * u[p] + w[p] * w[p] for p in range(P)]
    total = None
    for p in range(P):
        a0, a1, a2 = coeffs.a0[p], coeffs.a1[p], coeffs.a2[p]
        u_t, w_t = col(jets.t, 2 * p), col(jets.t, 2 * p + 1)
        u_tt, w_tt = col(jets.tt, 2 * p), col(jets.tt, 2 * p + 1)
        u_z, w_z = col(jets.z, 2 * p), col(jets.z, 2 * p + 1)
        r_re = -1.0 * w_z - a0 * u[p] + a2 * u_tt
        r_im = u_z - a0 * w[p] + a2 * w_tt
        if a1:
            r_re = r_re - a1 * w_t
            r_im = r_im + a1 * u_t
        if nonlinear:
            N = coeffs.a_spm[p] * intensity[p]
            for n in range(P):
                if n != p and coeffs.a_xpm[p][n]:
                    N = N + coeffs.a_xpm[p][n] * intensity[n]
            r_re = r_re + N * u[p]
            r_im = r_im + N * w[p]
        term = r_re * r_re + r_im * r_im
        total = term if total is None else total + term
    return total


def ic_target(t, k2: float, amplitudes) -> np.ndarray:
    """Real parts of ``U_p(t, 0)``, shape (len(t), P)."""
    g = np.exp(-0.5 * (k2 * np.asarray(t, dtype=float)) ** 2)
    return np.stack([a * g for a in amplitudes], axis=1)


def ic_residual(outputs, t, pulse: PulseSpec, amplitudes=None):
    """Squared distance to the launched Gaussian at ``zeta = 0``, summed over modes.

    ``outputs`` has one column per network output.  The target of mode
    ``p`` is ``(sqrt(split_p) exp(-(k2 t)^2 / 2), 0)``.
    """
    k2 = pulse.time_window / pulse.half_width
    amps = amplitudes if amplitudes is not None else [math.sqrt(s) for s in pulse.energy_split]
    return _ic_residual(outputs, ic_target(t, k2, amps))


def _ic_residual(outputs, target):
    total = None
    for p in range(target.shape[1]):
        d_re = outputs[:, 2 * p] - target[:, p]
        d_im = outputs[:, 2 * p + 1]
        term = d_re * d_re + d_im * d_im
        total = term if total is None else total + term
    return total


# optimizer and schedule ------------------------------------------------------


class Adam:
    def __init__(self, params, betas=(0.9, 0.999), eps=1e-8):
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.k = 0

    def step(self, params, grads, lr):
        self.k += 1
        c1 = 1.0 - self.b1**self.k
        c2 = 1.0 - self.b2**self.k
        out = []
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            out.append(p - lr * (m / c1) / (np.sqrt(v / c2) + self.eps))
        return out


class PlateauScheduler:
    """Multiply the rate by ``factor`` after ``patience`` steps without improvement."""

    def __init__(self, lr, factor=0.9, patience=30, min_lr=1e-7, threshold=1e-4):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.threshold = threshold
        self.best = math.inf
        self.bad = 0
        self.since_improvement = 0

    def step(self, loss: float) -> float:
        if loss < self.best * (1.0 - self.threshold):
            self.best = loss
            self.bad = 0
            self.since_improvement = 0
        else:
            self.bad += 1
            self.since_improvement += 1
        if self.bad >= self.patience:
            self.lr = max(self.lr * self.factor, self.min_lr)
            self.bad = 0
        return self.lr

    @property
    def at_floor(self) -> bool:
        return self.lr <= self.min_lr


# training --------------------------------------------------------------------


@dataclass
class TrainReport:
    iterations: list[int] = field(default_factory=list)
    total: list[float] = field(default_factory=list)
    pde: list[float] = field(default_factory=list)
    ic: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    stop_reason: str = ""
    mse: dict = field(default_factory=dict)

    def append(self, it, total, pde, ic, lr):
        self.iterations.append(it)
        self.total.append(total)
        self.pde.append(pde)
        self.ic.append(ic)
        self.lr.append(lr)

    def final_loss(self, window: int = 1) -> float:
        return float(np.mean(self.total[-window:]))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iteration,total,pde,ic,lr\n")
            for row in zip(self.iterations, self.total, self.pde, self.ic, self.lr):
                fh.write("{},{!r},{!r},{!r},{!r}\n".format(*row))


@dataclass
class _Batch:
    t: np.ndarray
    zeta: np.ndarray
    t_ic: np.ndarray
    target: np.ndarray


def _make_loss(coeffs: NormalizedSystem, w_pde: float, w_ic: float, parts: dict):
    def loss_fn(net, batch):
        total = None
        if w_pde:
            pde = pde_residual(net.jets(batch.t, batch.zeta), coeffs).mean()
            parts["pde"] = float(pde.data)
            total = w_pde * pde
        else:
            parts["pde"] = 0.0
        if w_ic and batch.t_ic.size:
            out = net.values(batch.t_ic, np.zeros_like(batch.t_ic))
            ic = _ic_residual(out, batch.target).mean()
            parts["ic"] = float(ic.data)
            total = w_ic * ic if total is None else total + w_ic * ic
        else:
            parts["ic"] = 0.0
        return total if total is not None else Tensor(0.0)

    return loss_fn


def batch_loss_gradient(state, batch, coeffs, cfg: TrainConfig):
    """Loss parts and gradient, optionally split across worker threads.

    With ``deterministic`` the chunk gradients are combined in chunk order;
    otherwise in completion order.
    """
    n_chunks = max(1, min(cfg.workers, batch.t.size))
    if n_chunks == 1:
        parts = {}
        total, grads = loss_gradient(state, batch, _make_loss(coeffs, cfg.w_pde, cfg.w_ic, parts))
        return total, parts["pde"], parts["ic"], grads

    idx = np.array_split(np.arange(batch.t.size), n_chunks)
    idx_ic = np.array_split(np.arange(batch.t_ic.size), n_chunks)
    n, n_ic = batch.t.size, batch.t_ic.size

    def work(k):
        # per-chunk weights reproduce the full-batch means
        sub = _Batch(batch.t[idx[k]], batch.zeta[idx[k]], batch.t_ic[idx_ic[k]],
                     batch.target[idx_ic[k]])
        parts = {}
        wp = cfg.w_pde * idx[k].size / n
        wi = cfg.w_ic * idx_ic[k].size / n_ic
        tot, g = loss_gradient(state, sub, _make_loss(coeffs, wp, wi, parts))
        return k, parts["pde"] * idx[k].size / n, parts["ic"] * idx_ic[k].size / n_ic, tot, g

    with ThreadPoolExecutor(max_workers=n_chunks) as pool:
        futures = [pool.submit(work, k) for k in range(n_chunks)]
        if cfg.deterministic:
            results = [f.result() for f in futures]
        else:
            results = [f.result() for f in as_completed(futures)]
    total, pde, ic, grads = 0.0, 0.0, 0.0, None
    for _, p, i, tot, g in results:
        total += tot
        pde += p
        ic += i
        grads = g if grads is None else [a + b for a, b in zip(grads, g)]
    return total, pde, ic, grads


def train(
    spec: NetworkSpec,
    state: NetworkState,
    coeffs: NormalizedSystem,
    cfg: TrainConfig,
    collocation: CollocationSet | None = None,
    callback=None,
) -> tuple[NetworkState, TrainReport]:
    """Minimize ``w_pde mean(pde) + w_ic mean(ic)`` with Adam and a plateau schedule.

    Stops at ``max_iterations`` or once the rate sits at its floor with no
    improvement for ``10 * patience`` iterations.  A non-finite loss raises
    :class:`TrainingDiverged` carrying the report so far.
    """
    if spec != state.spec:
        raise ValueError("state was built for a different network spec")
    if spec.n_outputs != 2 * coeffs.n_modes:
        raise ValueError(f"{spec.n_outputs} outputs cannot hold {coeffs.n_modes} modes")
    arrays = [coeffs.a0, coeffs.a1, coeffs.a2, coeffs.a_spm] + list(coeffs.a_xpm)
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise ValueError("non-finite coefficients")

    pts = collocation or sample_collocation(cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    n = pts.t.size
    bs = n if cfg.batch_size <= 0 else min(cfg.batch_size, n)
    target = ic_target(pts.t_ic, coeffs.frame.k2, coeffs.amplitudes)

    params = state.params()
    adam = Adam(params, cfg.betas, cfg.eps)
    sched = PlateauScheduler(cfg.learning_rate, cfg.factor, cfg.patience, cfg.min_lr,
                             cfg.threshold)
    report = TrainReport()
    start = time.perf_counter()
    order = rng.permutation(n)
    cursor = 0
    for it in range(cfg.max_iterations):
        if cursor + bs > n:
            order = rng.permutation(n)
            cursor = 0
        sel = order[cursor:cursor + bs]
        cursor += bs
        batch = _Batch(pts.t[sel], pts.zeta[sel], pts.t_ic, target)
        current = NetworkState.from_params(spec, params, state.seed)
        total, pde, ic, grads = batch_loss_gradient(current, batch, coeffs, cfg)
        lr = sched.lr
        report.append(it, total, pde, ic, lr)
        if not math.isfinite(total):
            report.wall_time = time.perf_counter() - start
            report.stop_reason = "diverged"
            raise TrainingDiverged(it, report)
        params = adam.step(params, grads, lr)
        sched.step(total)
        if callback is not None:
            callback(it, report)
        if sched.at_floor and sched.since_improvement >= 10 * cfg.patience:
            report.stop_reason = "learning-rate floor"
            break
    else:
        report.stop_reason = "max iterations"
    report.wall_time = time.perf_counter() - start
    return NetworkState.from_params(spec, params, state.seed), report


# validation ------------------------------------------------------------------


def network_field(state: NetworkState, zeta, t, chunk: int = 65536) -> np.ndarray:
    """Complex ``U_p`` on the outer product grid, shape (P, len(zeta), len(t))."""
    zeta = np.asarray(zeta, dtype=float)
    t = np.asarray(t, dtype=float)
    Z, Tt = np.meshgrid(zeta, t, indexing="ij")
    flat_z, flat_t = Z.ravel(), Tt.ravel()
    out = np.empty((flat_z.size, state.spec.n_outputs))
    for k in range(0, flat_z.size, chunk):
        out[k:k + chunk] = evaluate(state, flat_t[k:k + chunk], flat_z[k:k + chunk])
    P = state.spec.n_outputs // 2
    u = out[:, 0::2] + 1j * out[:, 1::2]
    return u.T.reshape(P, zeta.size, t.size)


def field_mse(U: np.ndarray, U_ref: np.ndarray) -> list[dict]:
    if U.shape != U_ref.shape:
        raise ValueError(f"grid mismatch: {U.shape} vs {U_ref.shape}")
    out = []
    for p in range(U.shape[0]):
        a, b = U[p], U_ref[p]
        out.append({
            "mse_abs": float(np.mean((np.abs(a) - np.abs(b)) ** 2)),
            "mse_re": float(np.mean((a.real - b.real) ** 2)),
            "mse_im": float(np.mean((a.imag - b.imag) ** 2)),
            "max_abs_err": float(np.max(np.abs(a - b))),
        })
    return out


def mse_vs_reference(state: NetworkState, reference, frame: FrameFactors, pulse: PulseSpec,
                     phase_offsets=None) -> list[dict]:
    """Per-mode MSEs of the network against a field history.

    ``reference`` is a :class:`~mmnlse.ssf.ComplexFieldGrid` in physical
    units; it is normalized by ``sqrt(P0)``.  ``phase_offsets[p]`` is
    ``delta_beta0 - scaled delta_beta0`` for runs trained on scaled
    coefficients: the network field is rotated by ``-offset * z`` before the
    Re/Im comparison.
    """
    if reference.n_modes * 2 != state.spec.n_outputs:
        raise ValueError(
            f"reference has {reference.n_modes} modes, network has "
            f"{state.spec.n_outputs // 2}"
        )
    zeta, t = frame.to_normalized(reference.z, reference.T)
    if zeta.min() < -1e-12 or zeta.max() > 1 + 1e-9 or np.abs(t).max() > 0.5 + 1e-9:
        raise ValueError("reference grid lies outside the normalized domain")
    U = network_field(state, zeta, t)
    if phase_offsets is not None:
        rot = np.exp(-1j * np.outer(phase_offsets, reference.z))
        U = U * rot[:, :, None]
    U_ref = reference.fields / math.sqrt(pulse.peak_power)
    return field_mse(U, U_ref)
