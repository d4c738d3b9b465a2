"""Residual network with exact input derivatives.

Inputs are ``(t, zeta)``; outputs are ``(Re U_1, Im U_1, Re U_2, ...)``.
Every hidden quantity is carried as a second-order jet: the value, its
first derivative in ``t``, second derivative in ``t`` and first derivative
in ``zeta``.  The jets are built from :class:`~mmnlse.autodiff.Tensor`
operations, so a loss assembled from them can be differentiated with
respect to the parameters by one reverse sweep.

Layout: affine embedding 2 -> width, ``n_blocks`` residual blocks
``h + act(W2 act(W1 h + b1) + b2)``, affine readout width -> outputs.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor

ACTIVATIONS = ("tanhshrink", "tanh", "identity", "square")


class NonFiniteError(FloatingPointError):
    def __init__(self, where: str):
        super().__init__(f"non-finite values in {where}")
        self.where = where


@dataclass(frozen=True)
class NetworkSpec:
    n_blocks: int = 6
    width: int = 150
    n_inputs: int = 2
    n_outputs: int = 6
    activation: str = "tanhshrink"

    def __post_init__(self):
        if self.n_blocks < 1 or self.width < 1:
            raise ValueError("n_blocks and width must be >= 1")
        if self.n_inputs != 2:
            raise ValueError("the network takes exactly (t, zeta)")
        if self.n_outputs < 2 or self.n_outputs % 2:
            raise ValueError("n_outputs must be a positive even number")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def layer_shapes(self) -> list[tuple[int, int]]:
        w = self.width
        return [(self.n_inputs, w)] + [(w, w)] * (2 * self.n_blocks) + [(w, self.n_outputs)]

    def block_names(self) -> list[str]:
        names = ["embed"]
        for k in range(self.n_blocks):
            names += [f"block{k}.fc1", f"block{k}.fc2"]
        return names + ["readout"]

    def digest(self) -> bytes:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).digest()


@dataclass
class NetworkState:
    """Weights ``(fan_in, fan_out)`` and biases, in layer order."""

    spec: NetworkSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int = 0

    def __post_init__(self):
        shapes = self.spec.layer_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ValueError("parameter count does not match the spec")
        for (fi, fo), W, b in zip(shapes, self.weights, self.biases):
            if W.shape != (fi, fo) or b.shape != (fo,):
                raise ValueError(f"bad parameter shape {W.shape}/{b.shape}, want {(fi, fo)}")

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    @classmethod
    def from_params(cls, spec, params, seed=0) -> "NetworkState":
        return cls(spec, [np.array(p, dtype=float) for p in params[0::2]],
                   [np.array(p, dtype=float) for p in params[1::2]], seed)

    @classmethod
    def from_flat(cls, spec: NetworkSpec, flat: np.ndarray, seed: int = 0) -> "NetworkState":
        params, k = [], 0
        for fi, fo in spec.layer_shapes():
            params.append(flat[k:k + fi * fo].reshape(fi, fo))
            k += fi * fo
            params.append(flat[k:k + fo].copy())
            k += fo
        if k != flat.size:
            raise ValueError("flat parameter vector has the wrong length")
        return cls.from_params(spec, params, seed)

    def __add__(self, other: "NetworkState") -> "NetworkState":
        return NetworkState.from_params(
            self.spec, [a + b for a, b in zip(self.params(), other.params())], self.seed
        )


def xavier_init(spec: NetworkSpec, seed: int = 0) -> NetworkState:
    """Uniform Glorot weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fi, fo in spec.layer_shapes():
        bound = np.sqrt(6.0 / (fi + fo))
        weights.append(rng.uniform(-bound, bound, size=(fi, fo)))
        biases.append(np.zeros(fo))
    return NetworkState(spec, weights, biases, seed)


def tanhshrink(x):
    return x - np.tanh(x)


def tanhshrink_derivatives(x):
    th = np.tanh(x)
    return x - th, th * th, 2.0 * th * (1.0 - th * th)


@dataclass
class Jet:
    value: float
    d_t: float
    d_tt: float
    d_zeta: float


class JetBatch:
    """Second-order jets of a batch; each channel is a Tensor of shape (B, k)."""

    __slots__ = ("v", "t", "tt", "z")

    def __init__(self, v, t, tt, z):
        self.v, self.t, self.tt, self.z = v, t, tt, z

    def affine(self, W, b):
        return JetBatch(self.v @ W + b, self.t @ W, self.tt @ W, self.z @ W)

    def __add__(self, other):
        return JetBatch(self.v + other.v, self.t + other.t, self.tt + other.tt, self.z + other.z)

    def activate(self, name: str) -> "JetBatch":
        x = self.v
        if name == "identity":
            return self
        if name == "tanhshrink":
            th = x.tanh()
            s1 = th.square()
            s0 = x - th
            s2 = 2.0 * (th - th * s1)
        elif name == "tanh":
            s0 = x.tanh()
            s1 = 1.0 - s0.square()
            s2 = -2.0 * (s0 * s1)
        elif name == "square":
            s0, s1, s2 = x.square(), 2.0 * x, Tensor(2.0)
        else:
            raise ValueError(name)
        return JetBatch(s0, s1 * self.t, s2 * self.t.square() + s1 * self.tt, s1 * self.z)

    def column(self, k: int) -> "JetBatch":
        return JetBatch(self.v[:, k], self.t[:, k], self.tt[:, k], self.z[:, k])

    def data(self):
        return self.v.data, self.t.data, self.tt.data, self.z.data


def _check(x: Tensor, where: str):
    if not np.all(np.isfinite(x.data)):
        raise NonFiniteError(where)


def parameter_tensors(state: NetworkState, requires_grad: bool = True) -> list[Tensor]:
    return [Tensor(p, requires_grad=requires_grad) for p in state.params()]


def forward_batch(spec: NetworkSpec, params: list[Tensor], t, zeta) -> JetBatch:
    """Jets of all outputs at the points ``(t[i], zeta[i])``."""
    t = np.asarray(t, dtype=float).ravel()
    zeta = np.asarray(zeta, dtype=float).ravel()
    n = t.size
    x = Tensor(np.stack([t, zeta], axis=1))
    ones, zeros = np.ones(n), np.zeros(n)
    h = JetBatch(
        x,
        Tensor(np.stack([ones, zeros], axis=1)),
        Tensor(np.zeros((n, 2))),
        Tensor(np.stack([zeros, ones], axis=1)),
    )
    names = spec.block_names()
    h = h.affine(params[0], params[1])
    _check(h.v, f"layer 0 ({names[0]})")
    k = 2
    for blk in range(spec.n_blocks):
        y = h.affine(params[k], params[k + 1]).activate(spec.activation)
        _check(y.v, f"layer {1 + 2 * blk} ({names[1 + 2 * blk]})")
        y = y.affine(params[k + 2], params[k + 3]).activate(spec.activation)
        _check(y.v, f"layer {2 + 2 * blk} ({names[2 + 2 * blk]})")
        h = h + y
        k += 4
    out = h.affine(params[k], params[k + 1])
    _check(out.v, f"layer {len(names) - 1} ({names[-1]})")
    return out


def forward_values(spec: NetworkSpec, params, t, zeta) -> np.ndarray | Tensor:
    """Outputs only, without derivative channels; shape (B, n_outputs)."""
    act = {
        "tanhshrink": lambda v: v - v.tanh(),
        "tanh": lambda v: v.tanh(),
        "identity": lambda v: v,
        "square": lambda v: v.square(),
    }[spec.activation]
    t = np.asarray(t, dtype=float).ravel()
    zeta = np.asarray(zeta, dtype=float).ravel()
    h = Tensor(np.stack([t, zeta], axis=1)) @ params[0] + params[1]
    k = 2
    for _ in range(spec.n_blocks):
        y = act(h @ params[k] + params[k + 1])
        y = act(y @ params[k + 2] + params[k + 3])
        h = h + y
        k += 4
    return h @ params[k] + params[k + 1]


def evaluate(state: NetworkState, t, zeta) -> np.ndarray:
    """Network outputs as a plain array of shape (B, n_outputs)."""
    params = parameter_tensors(state, requires_grad=False)
    return forward_values(state.spec, params, t, zeta).data


def forward_jet(state: NetworkState, t: float, zeta: float) -> list[Jet]:
    if not (np.isfinite(t) and np.isfinite(zeta)):
        raise ValueError("inputs must be finite")
    params = parameter_tensors(state, requires_grad=False)
    v, dt, dtt, dz = forward_batch(state.spec, params, [t], [zeta]).data()
    return [Jet(float(v[0, k]), float(dt[0, k]), float(dtt[0, k]), float(dz[0, k]))
            for k in range(state.spec.n_outputs)]


def jets_array(state: NetworkState, t, zeta):
    """Batch jets as numpy arrays ``(value, d_t, d_tt, d_zeta)``, each (B, n_outputs)."""
    params = parameter_tensors(state, requires_grad=False)
    return forward_batch(state.spec, params, t, zeta).data()


class TapedNetwork:
    """Network whose parameters are leaves of a fresh autodiff graph."""

    def __init__(self, state: NetworkState):
        self.spec = state.spec
        self.params = parameter_tensors(state)

    def jets(self, t, zeta) -> JetBatch:
        return forward_batch(self.spec, self.params, t, zeta)

    def values(self, t, zeta) -> Tensor:
        return forward_values(self.spec, self.params, t, zeta)


def loss_gradient(state: NetworkState, batch, loss_fn):
    """Loss value and its exact gradient w.r.t. every parameter.

    ``loss_fn(net, batch)`` gets a :class:`TapedNetwork` and must return a
    scalar Tensor built from ``net.jets(...)`` and/or ``net.values(...)``.
    The gradient is a list aligned with :meth:`NetworkState.params`.
    """
    net = TapedNetwork(state)
    loss = loss_fn(net, batch)
    loss.backward()
    names = state.spec.block_names()
    grads = []
    for i, p in enumerate(net.params):
        g = np.zeros_like(p.data) if p.grad is None else p.grad
        if not np.all(np.isfinite(g)):
            kind = "weight" if i % 2 == 0 else "bias"
            raise NonFiniteError(f"gradient of {names[i // 2]} {kind}")
        grads.append(g)
    return float(loss.data), grads


# checkpoints ---------------------------------------------------------------

_CKPT_MAGIC = b"MMPN"
_CKPT_VERSION = 1
# magic, version, spec sha256, seed, n_params, then float64 LE parameters
_CKPT_HEADER = struct.Struct("<4sI32sqq")


def save_checkpoint(path, state: NetworkState, meta: dict | None = None) -> None:
    path = Path(path)
    flat = state.flat().astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(_CKPT_MAGIC, _CKPT_VERSION, state.spec.digest(),
                                   int(state.seed), flat.size))
        fh.write(flat.tobytes())
    info = {"spec": asdict(state.spec), "seed": int(state.seed)}
    info.update(meta or {})
    path.with_suffix(".json").write_text(json.dumps(info, indent=2, sort_keys=True))


def load_checkpoint(path) -> tuple[NetworkState, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    spec = NetworkSpec(**meta["spec"])
    raw = path.read_bytes()
    magic, version, digest, seed, n = _CKPT_HEADER.unpack_from(raw)
    if magic != _CKPT_MAGIC or version != _CKPT_VERSION:
        raise ValueError(f"{path} is not a network checkpoint")
    if digest != spec.digest():
        raise ValueError(f"{path}: spec hash does not match its metadata")
    flat = np.frombuffer(raw, dtype="<f8", count=n, offset=_CKPT_HEADER.size).astype(float)
    return NetworkState.from_flat(spec, flat, seed), meta
