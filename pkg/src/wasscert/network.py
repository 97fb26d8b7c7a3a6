"""Multilayer perceptrons ``C_L o sigma o ... o sigma o C_1`` in plain numpy.

Parameters are 64-bit floats. The forward pass works on a batch of points
``(n, d)`` and returns ``n`` scalars; there is no activation after the last
affine layer.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionMismatch, PowerIterationError
from .measures import SamplingDistribution, Seed, sample_points

ACTIVATIONS = ("relu", "tanh")
_MAGIC = b"WCMLP\x00\x01\x00"


@dataclass(frozen=True)
class MlpSpec:
    dims: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        dims = tuple(int(v) for v in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) < 2:
            raise ConfigError("network.dims", "at least input and output dims (L >= 1)")
        if any(v < 1 for v in dims):
            raise ConfigError("network.dims", "all layer dims >= 1")
        if dims[-1] != 1:
            raise ConfigError("network.dims", "output dim must be 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError("network.activation", f"one of {ACTIVATIONS}")

    @classmethod
    def hidden(cls, d: int, widths: Sequence[int], activation: str = "relu") -> "MlpSpec":
        return cls((d, *widths, 1), activation)

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1

    @property
    def input_dim(self) -> int:
        return self.dims[0]


def param_count(spec: MlpSpec) -> int:
    """``sum_k d_{k+1} (d_k + 1)``."""
    d = spec.dims
    return sum(d[k + 1] * (d[k] + 1) for k in range(len(d) - 1))


def _act(name, z):
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _act_grad(name, z, a):
    # relu subgradient is 0 at 0
    return (z > 0).astype(z.dtype) if name == "relu" else 1.0 - a * a


@dataclass
class MlpParams:
    spec: MlpSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        d = self.spec.dims
        if len(self.weights) != self.spec.n_layers or len(self.biases) != self.spec.n_layers:
            raise ValueError("one weight matrix and one bias per layer")
        self.weights = [np.array(w, dtype=np.float64).reshape(d[k + 1], d[k]) for k, w in enumerate(self.weights)]
        self.biases = [np.array(b, dtype=np.float64).reshape(d[k + 1]) for k, b in enumerate(self.biases)]

    @classmethod
    def zeros(cls, spec: MlpSpec) -> "MlpParams":
        d = spec.dims
        return cls(spec, [np.zeros((d[k + 1], d[k])) for k in range(spec.n_layers)],
                   [np.zeros(d[k + 1]) for k in range(spec.n_layers)])

    @classmethod
    def init(cls, spec: MlpSpec, rng: np.random.Generator) -> "MlpParams":
        """Scaled uniform init, ``U(-a, a)`` with ``a = sqrt(6 / (fan_in + fan_out))``.

        Hidden biases share the weights' range so relu kinks are spread over
        the input box instead of all sitting at the origin; the output bias is 0.
        """
        d = spec.dims
        ws, bs = [], []
        for k in range(spec.n_layers):
            a = np.sqrt(6.0 / (d[k] + d[k + 1]))
            ws.append(rng.uniform(-a, a, size=(d[k + 1], d[k])))
            last = k == spec.n_layers - 1
            bs.append(np.zeros(d[k + 1]) if last else rng.uniform(-a, a, size=d[k + 1]))
        return cls(spec, ws, bs)

    @classmethod
    def from_flat(cls, spec: MlpSpec, theta: np.ndarray) -> "MlpParams":
        theta = np.asarray(theta, dtype=np.float64).ravel()
        if theta.size != param_count(spec):
            raise ValueError(f"expected {param_count(spec)} parameters, got {theta.size}")
        d, pos, ws, bs = spec.dims, 0, [], []
        for k in range(spec.n_layers):
            m = d[k + 1] * d[k]
            ws.append(theta[pos:pos + m].reshape(d[k + 1], d[k]))
            pos += m
            bs.append(theta[pos:pos + d[k + 1]].copy())
            pos += d[k + 1]
        return cls(spec, ws, bs)

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b]
        return np.concatenate(parts)

    def copy(self) -> "MlpParams":
        return MlpParams(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def __call__(self, x) -> np.ndarray:
        return mlp_forward(self, x)


def _as_batch(params: MlpParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    d = params.spec.input_dim
    if x.ndim <= 1:
        x = x.reshape(-1, d) if d > 1 or x.ndim == 0 else x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[1] != d:
        raise DimensionMismatch(f"network expects inputs of dimension {d}, got shape {x.shape}")
    return x


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Evaluate the network at one point or a batch ``(n, d)``; returns shape ``(n,)``."""
    a = _as_batch(params, x)
    act = params.spec.activation
    last = params.spec.n_layers - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = a @ w.T + b
        if k < last:
            a = _act(act, a)
    return a[:, 0]


def forward_cache(params: MlpParams, x):
    """Forward pass keeping pre-activations and activations for :func:`backward`."""
    x = _as_batch(params, x)
    act = params.spec.activation
    L = params.spec.n_layers
    zs, acts = [], [x]
    a = x
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        zs.append(z)
        a = _act(act, z) if k < L - 1 else z
        acts.append(a)
    return a[:, 0], (zs, acts)


def backward(params: MlpParams, cache, dout: np.ndarray):
    """Gradients of ``sum_i dout_i u(x_i)`` w.r.t. weights and biases."""
    zs, acts = cache
    act = params.spec.activation
    L = params.spec.n_layers
    delta = np.asarray(dout, dtype=np.float64).reshape(-1, 1)
    gw, gb = [None] * L, [None] * L
    for k in range(L - 1, -1, -1):
        gw[k] = delta.T @ acts[k]
        gb[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params.weights[k]) * _act_grad(act, zs[k - 1], acts[k])
    return gw, gb


def forward_backward(params: MlpParams, x, dout: np.ndarray):
    out, cache = forward_cache(params, x)
    gw, gb = backward(params, cache, dout)
    return out, gw, gb


def spectral_norm(w: np.ndarray, tol: float = 1e-8, max_iter: int = 20_000) -> float:
    """Largest singular value by power iteration on ``W^T W``."""
    w = np.asarray(w, dtype=np.float64)
    if not np.any(w):
        return 0.0
    if min(w.shape) == 1:
        return float(np.linalg.norm(w))
    v = np.random.default_rng(0).standard_normal(w.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        u = w @ v
        s_u = np.linalg.norm(u)
        if s_u == 0.0:
            # start vector in the null space; reseed deterministically
            v = np.roll(v, 1) + 1.0
            v /= np.linalg.norm(v)
            continue
        v_new = w.T @ (u / s_u)
        new = float(np.linalg.norm(v_new))
        v = v_new / new
        if abs(new - sigma) <= tol * new:
            return new
        sigma = new
    raise PowerIterationError("spectral norm power iteration did not converge", sigma)


def lipschitz_upper(params: MlpParams, lip_activation: float = 1.0) -> float:
    """Certified Lipschitz bound ``lip_activation^{L-1} prod_k ||W_k||_2``."""
    if lip_activation < 0:
        raise ValueError("lip_activation must be >= 0")
    bound = lip_activation ** (params.spec.n_layers - 1)
    for w in params.weights:
        bound *= spectral_norm(w)
    return float(bound)


def empirical_lipschitz(fn, dist: SamplingDistribution, pairs: int, seed: Seed) -> float:
    """Max of ``|g(x) - g(x')| / |x - x'|`` over sampled pairs (a lower bound on Lip(g))."""
    if pairs < 1:
        raise ValueError("pairs >= 1")
    x = sample_points(dist, pairs, seed.spawn(0)).points
    y = sample_points(dist, pairs, seed.spawn(1)).points.copy()
    gap = np.linalg.norm(x - y, axis=1)
    k = 2
    while np.any(gap < 1e-12):
        bad = np.flatnonzero(gap < 1e-12)
        y[bad] = sample_points(dist, bad.size, seed.spawn(k)).points
        gap = np.linalg.norm(x - y, axis=1)
        k += 1
    diff = np.abs(np.asarray(fn(x)).reshape(-1) - np.asarray(fn(y)).reshape(-1))
    return float(np.max(diff / gap))


def lipschitz_lower_empirical(params: MlpParams, dist: SamplingDistribution, pairs: int, seed: Seed) -> float:
    return empirical_lipschitz(params, dist, pairs, seed)


@dataclass(frozen=True)
class LipschitzEstimate:
    upper: float
    lower: float
    pair_count: int


def lipschitz_bracket(params: MlpParams, dist: SamplingDistribution, pairs: int, seed: Seed) -> LipschitzEstimate:
    return LipschitzEstimate(lipschitz_upper(params), lipschitz_lower_empirical(params, dist, pairs, seed), pairs)


def project_spectral(params: MlpParams, cap: float) -> bool:
    """Rescale in place every ``W_k`` whose spectral norm exceeds ``cap``. True if any did."""
    bound = False
    for k, w in enumerate(params.weights):
        s = spectral_norm(w)
        if s > cap:
            params.weights[k] = w * (cap / s)
            bound = True
    return bound


def save_params(params: MlpParams, path) -> None:
    """Binary model file: magic, uint32 layer count + activation tag, uint32 dims, '<f8' parameters."""
    spec = params.spec
    header = _MAGIC + struct.pack("<II", len(spec.dims), ACTIVATIONS.index(spec.activation))
    header += struct.pack(f"<{len(spec.dims)}I", *spec.dims)
    Path(path).write_bytes(header + params.flat().astype("<f8").tobytes())


def load_params(path) -> MlpParams:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path}: not a model file")
    n_dims, tag = struct.unpack_from("<II", raw, 8)
    dims = struct.unpack_from(f"<{n_dims}I", raw, 16)
    spec = MlpSpec(tuple(dims), ACTIVATIONS[tag])
    theta = np.frombuffer(raw, dtype="<f8", offset=16 + 4 * n_dims)
    return MlpParams.from_flat(spec, theta.astype(np.float64))
