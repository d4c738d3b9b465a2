import dataclasses
import math
from types import SimpleNamespace

import numpy as np
import pytest

from mmnlse import presets
from mmnlse.analytic import AnalyticQuery, linear_multimode
from mmnlse.autodiff import Tensor
from mmnlse.network import NetworkSpec, NetworkState, xavier_init
from mmnlse.pinn import (
    Adam, PlateauScheduler, TrainConfig, TrainingDiverged, batch_loss_gradient, _Batch,
    ic_residual, ic_target, mse_vs_reference, pde_residual, sample_collocation, train,
)
from mmnlse.ssf import ComplexFieldGrid
from mmnlse.transforms import frame_for, normalized_coefficients


def _coeffs(n_modes=1, length=19.0, nonlinear=False, scaling=True, window=8.0):
    fiber = presets.canonical_fiber(length, n_modes, nonlinear=nonlinear)
    pulse = presets.canonical_pulse(10.0, n_modes, window)
    return normalized_coefficients(fiber, pulse, scaling=scaling), fiber, pulse


def test_corridor_fraction_at_full_count():
    pts = sample_collocation(TrainConfig(), seed=0)
    inside = np.sum(np.abs(pts.t) <= 0.25)
    assert abs(inside - 216_000) <= 1
    assert pts.t.min() >= -0.5 and pts.t.max() <= 0.5
    assert pts.zeta.min() >= 0 and pts.zeta.max() <= 1


def test_zero_corridor_is_uniform():
    cfg = TrainConfig(n_interior=20_000, corridor_fraction=0.0)
    pts = sample_collocation(cfg, seed=1)
    assert np.mean(np.abs(pts.t) <= 0.25) == pytest.approx(0.5, abs=0.02)
    tiny = sample_collocation(TrainConfig(n_interior=10, corridor_fraction=0.0), seed=1)
    assert tiny.t.size == 10


def test_sampling_deterministic():
    cfg = TrainConfig(n_interior=500, n_boundary=50)
    a, b = sample_collocation(cfg, 3), sample_collocation(cfg, 3)
    assert np.array_equal(a.t, b.t) and np.array_equal(a.zeta, b.zeta)
    assert np.array_equal(a.t_ic, b.t_ic)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(factor=1.0)
    with pytest.raises(ValueError):
        TrainConfig(min_lr=0.0)


def _jets_from_closed_form(c, fiber, pulse, t, zeta, h=1e-4):
    """Jets of the analytic solution via central differences (numpy channels)."""
    frame = c.frame

    def U(tt, zz):
        cols = []
        for p, m in enumerate(fiber.modes):
            db0 = c.a0[p] / frame.L_ref
            q = AnalyticQuery(zz * frame.L_ref, tt * frame.T_ref, pulse.half_width, m.beta2,
                              db0, m.delta_beta1)
            u = c.amplitudes[p] * linear_multimode(q)
            cols += [u.real, u.imag]
        return np.stack(cols, axis=1)

    v = U(t, zeta)
    d_t = (U(t + h, zeta) - U(t - h, zeta)) / (2 * h)
    d_tt = (U(t + h, zeta) - 2 * v + U(t - h, zeta)) / h**2
    d_z = (-U(t, zeta + 2 * h) + 8 * U(t, zeta + h) - 8 * U(t, zeta - h)
           + U(t, zeta - 2 * h)) / (12 * h)
    return SimpleNamespace(v=v, t=d_t, tt=d_tt, z=d_z)


def test_pde_residual_of_closed_form(rng):
    c, fiber, pulse = _coeffs(3, 5.0, window=100.0)
    t = rng.uniform(-0.05, 0.05, 64)
    zeta = rng.uniform(0.1, 0.9, 64)
    jets = _jets_from_closed_form(c, fiber, pulse, t, zeta, h=1e-5)
    assert np.max(pde_residual(jets, c)) < 1e-6


def test_pde_residual_zero_field():
    c, *_ = _coeffs()
    z = np.zeros((4, 2))
    assert np.all(pde_residual(SimpleNamespace(v=z, t=z, tt=z, z=z), c) == 0)


def test_pde_residual_constant_field():
    c, *_ = _coeffs(3, 5.0, scaling=True, window=100.0)
    one = np.zeros((3, 6))
    one[:, 0::2] = 1.0
    z = np.zeros((3, 6))
    r = pde_residual(SimpleNamespace(v=one, t=z, tt=z, z=z), c)
    assert np.allclose(r, sum(a**2 for a in c.a0))


def test_pde_residual_tensor_and_array_agree(rng):
    c, *_ = _coeffs(3, 5.0, nonlinear=True, window=100.0)
    ch = [rng.normal(size=(5, 6)) for _ in range(4)]
    a = pde_residual(SimpleNamespace(v=ch[0], t=ch[1], tt=ch[2], z=ch[3]), c)
    b = pde_residual(SimpleNamespace(v=Tensor(ch[0]), t=Tensor(ch[1]), tt=Tensor(ch[2]),
                                     z=Tensor(ch[3])), c)
    assert np.allclose(a, b.data, rtol=1e-14)


def test_residual_even_in_t(rng):
    c, *_ = _coeffs(1, 19.0, nonlinear=True)
    t = rng.uniform(0, 0.5, 10)
    zeta = rng.uniform(0, 1, 10)

    def jets(tt):
        # an even field u = exp(-t^2) (1 + zeta), w = t^2 zeta
        u = np.exp(-tt**2) * (1 + zeta)
        w = tt**2 * zeta
        v = np.stack([u, w], 1)
        d_t = np.stack([-2 * tt * u, 2 * tt * zeta], 1)
        d_tt = np.stack([(4 * tt**2 - 2) * u, 2 * zeta], 1)
        d_z = np.stack([np.exp(-tt**2), tt**2], 1)
        return SimpleNamespace(v=v, t=d_t, tt=d_tt, z=d_z)

    assert np.allclose(pde_residual(jets(t), c), pde_residual(jets(-t), c))


def test_ic_residual_cases():
    pulse = presets.canonical_pulse(10.0, 1, 8.0)
    k2 = pulse.time_window / pulse.half_width
    t = np.array([0.0, 0.01, -0.03])
    perfect = np.stack([np.exp(-0.5 * (k2 * t) ** 2), np.zeros(3)], 1)
    assert np.allclose(ic_residual(perfect, t, pulse), 0)
    assert ic_residual(np.zeros((1, 2)), np.array([0.0]), pulse)[0] == pytest.approx(1.0)


def test_ic_target_equal_split():
    pulse = presets.canonical_pulse(10.0, 3)
    target = ic_target([0.0], 1.0, [math.sqrt(s) for s in pulse.energy_split])
    assert np.allclose(target, math.sqrt(1 / 3))


def test_scheduler_contract():
    s = PlateauScheduler(1e-3, factor=0.9, patience=3, min_lr=1e-7)
    s.step(1.0)
    lrs = [s.step(1.0) for _ in range(3)]
    assert lrs == [1e-3, 1e-3, pytest.approx(9e-4)]
    for _ in range(10_000):
        s.step(1.0)
    assert s.lr == 1e-7 and s.at_floor


def test_scheduler_resets_on_improvement():
    s = PlateauScheduler(1.0, patience=2)
    s.step(1.0)
    s.step(1.0)
    s.step(0.5)
    assert s.step(0.5) == 1.0 and s.bad == 1


def test_adam_first_step_is_lr_sign():
    p = [np.array([1.0, -2.0])]
    out = Adam(p).step(p, [np.array([0.3, -5.0])], 0.1)
    assert np.allclose(out[0], [0.9, -1.9], atol=1e-6)


def _small_setup(n_modes=1, **kw):
    c, fiber, pulse = _coeffs(n_modes)
    spec = NetworkSpec(1, 8, n_outputs=2 * n_modes)
    cfg = TrainConfig(n_interior=256, n_boundary=64, batch_size=64, max_iterations=20,
                      seed=5, **kw)
    return c, spec, cfg


def test_loss_decomposition_exact():
    c, spec, cfg = _small_setup(w_pde=0.7, w_ic=2.0)
    _, rep = train(spec, xavier_init(spec, 0), c, cfg)
    for tot, p, i in zip(rep.total, rep.pde, rep.ic):
        assert tot == pytest.approx(0.7 * p + 2.0 * i, rel=1e-12)
    assert rep.iterations == list(range(len(rep.iterations)))
    assert all(b <= a for a, b in zip(rep.lr, rep.lr[1:]))


def test_training_reproducible():
    c, spec, cfg = _small_setup()
    s1, r1 = train(spec, xavier_init(spec, 0), c, cfg)
    s2, r2 = train(spec, xavier_init(spec, 0), c, cfg)
    assert r1.total == r2.total and np.array_equal(s1.flat(), s2.flat())


def test_chunked_gradient_matches_single():
    c, spec, cfg = _small_setup()
    st = xavier_init(spec, 0)
    pts = sample_collocation(cfg)
    batch = _Batch(pts.t[:40], pts.zeta[:40], pts.t_ic,
                   ic_target(pts.t_ic, c.frame.k2, c.amplitudes))
    one = batch_loss_gradient(st, batch, c, cfg)
    for det in (True, False):
        many = batch_loss_gradient(st, batch, c, dataclasses.replace(cfg, workers=3,
                                                                     deterministic=det))
        assert many[0] == pytest.approx(one[0], rel=1e-12)
        assert all(np.allclose(a, b, rtol=1e-10, atol=1e-14) for a, b in zip(one[3], many[3]))
    a = batch_loss_gradient(st, batch, c, dataclasses.replace(cfg, workers=3))
    b = batch_loss_gradient(st, batch, c, dataclasses.replace(cfg, workers=3))
    assert a[0] == b[0] and all(np.array_equal(x, y) for x, y in zip(a[3], b[3]))


def test_ic_only_training_fits_gaussian():
    c, *_ = _coeffs()
    spec = NetworkSpec(1, 16, n_outputs=2, activation="tanh")
    cfg = TrainConfig(n_interior=64, n_boundary=256, batch_size=0, max_iterations=1500,
                      w_pde=0.0, learning_rate=5e-3, seed=2)
    _, rep = train(spec, xavier_init(spec, 2), c, cfg)
    assert rep.ic[-1] < 1e-4


def test_divergence_aborts_with_report():
    c, spec, cfg = _small_setup()
    st = xavier_init(spec, 0)
    params = st.params()
    params[-1] = params[-1] + 1e200
    with pytest.raises(TrainingDiverged) as err, np.errstate(all="ignore"):
        train(spec, NetworkState.from_params(spec, params), c, cfg)
    assert err.value.report.total


def test_output_count_must_match_modes():
    c, *_ = _coeffs(3, window=100.0)
    spec = NetworkSpec(1, 4, n_outputs=2)
    with pytest.raises(ValueError):
        train(spec, xavier_init(spec), c, TrainConfig(n_interior=8, n_boundary=8))


def test_loss_csv(tmp_path):
    c, spec, cfg = _small_setup()
    _, rep = train(spec, xavier_init(spec, 0), c, cfg)
    rep.to_csv(tmp_path / "loss.csv")
    rows = (tmp_path / "loss.csv").read_text().splitlines()
    assert rows[0] == "iteration,total,pde,ic,lr" and len(rows) == 21


def _reference(fiber, pulse, n_z=5, n_t=64):
    z = np.linspace(0, fiber.length, n_z)
    T = -pulse.time_window / 2 + pulse.time_window / n_t * np.arange(n_t)
    m = fiber.modes[0]
    u = linear_multimode(AnalyticQuery(z[:, None], T[None, :], pulse.half_width, m.beta2))
    return ComplexFieldGrid(z, T, (math.sqrt(pulse.peak_power) * u)[None])


def test_mse_zero_network_is_mean_square():
    c, fiber, pulse = _coeffs()
    spec = NetworkSpec(1, 4, n_outputs=2)
    zero = NetworkState.from_flat(spec, np.zeros(xavier_init(spec).flat().size))
    ref = _reference(fiber, pulse)
    mse = mse_vs_reference(zero, ref, frame_for(fiber, pulse), pulse)[0]
    assert mse["mse_abs"] == pytest.approx(np.mean(np.abs(ref.fields / math.sqrt(
        pulse.peak_power)) ** 2))


def test_mse_mode_mismatch():
    c, fiber, pulse = _coeffs()
    spec = NetworkSpec(1, 4, n_outputs=4)
    with pytest.raises(ValueError):
        mse_vs_reference(xavier_init(spec), _reference(fiber, pulse), frame_for(fiber, pulse),
                         pulse)
