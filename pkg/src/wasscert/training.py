"""Discrete L^p loss, full-batch Adam training and Monte-Carlo risk estimates."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, TrainingFailed
from .measures import PointCloud, SamplingDistribution, Seed, as_cloud, sample_points
from .network import MlpParams, MlpSpec, backward, forward_cache, project_spectral, save_params

log = logging.getLogger(__name__)

TARGET_KINDS = ("abs-offset", "sinusoid", "radial", "piecewise-linear", "affine")
MODES = ("best-of-restarts", "single-run-local")


@dataclass(frozen=True)
class TargetFunction:
    """Analytic target ``f`` with a known Lipschitz constant.

    kinds:
      abs-offset        ``|x - center|``
      sinusoid          ``amplitude * sin(2 pi frequency . x)``
      radial            ``|x|``
      piecewise-linear  linear interpolation of (knots, values) in the first coordinate
      affine            ``slope . x + intercept``

    Scalar ``center``/``frequency``/``slope`` broadcast over coordinates.
    """

    kind: str
    center: float | tuple = 0.5
    amplitude: float = 1.0
    frequency: float | tuple = 1.0
    knots: tuple = (0.0, 0.5, 1.0)
    values: tuple = (0.0, 1.0, 0.0)
    slope: float | tuple = 1.0
    intercept: float = 0.0

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ConfigError("target.kind", f"one of {', '.join(TARGET_KINDS)}")
        for name in ("center", "frequency", "slope", "knots", "values"):
            v = getattr(self, name)
            if isinstance(v, list):
                object.__setattr__(self, name, tuple(v))
        if self.kind == "piecewise-linear":
            k = np.asarray(self.knots, dtype=float)
            if k.size < 2 or k.size != len(self.values) or np.any(np.diff(k) <= 0):
                raise ConfigError("target.knots", "at least two strictly increasing knots, one value each")

    def _vec(self, v, d):
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.size == 1:
            return np.full(d, v[0])
        if v.size != d:
            raise ConfigError("target", f"vector parameter of length {v.size} for dimension {d}")
        return v

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim <= 1:
            x = x.reshape(-1, 1)
        d = x.shape[1]
        if self.kind == "abs-offset":
            return np.linalg.norm(x - self._vec(self.center, d), axis=1)
        if self.kind == "sinusoid":
            return self.amplitude * np.sin(2 * np.pi * (x @ self._vec(self.frequency, d)))
        if self.kind == "radial":
            return np.linalg.norm(x, axis=1)
        if self.kind == "piecewise-linear":
            return np.interp(x[:, 0], self.knots, self.values)
        return x @ self._vec(self.slope, d) + self.intercept

    def lipschitz(self, dim: int) -> float:
        if self.kind in ("abs-offset", "radial"):
            return 1.0
        if self.kind == "sinusoid":
            return float(abs(self.amplitude) * 2 * np.pi * np.linalg.norm(self._vec(self.frequency, dim)))
        if self.kind == "piecewise-linear":
            return float(np.max(np.abs(np.diff(self.values) / np.diff(self.knots))))
        return float(np.linalg.norm(self._vec(self.slope, dim)))

    def to_dict(self) -> dict:
        keep = {
            "abs-offset": ("center",), "sinusoid": ("amplitude", "frequency"), "radial": (),
            "piecewise-linear": ("knots", "values"), "affine": ("slope", "intercept"),
        }[self.kind]
        out = {"kind": self.kind}
        for k in keep:
            v = getattr(self, k)
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TargetFunction":
        allowed = {"kind", "center", "amplitude", "frequency", "knots", "values", "slope", "intercept"}
        for key in data:
            if key not in allowed:
                raise ConfigError(f"target.{key}", "unknown key")
        if "kind" not in data:
            raise ConfigError("target.kind", "required")
        return cls(**data)


def _values(g, points: np.ndarray) -> np.ndarray:
    return np.asarray(g(points), dtype=np.float64).reshape(-1)


def discrete_loss(g, cloud, f: Callable, p: float = 2) -> float:
    """``(1/N) sum_i |g(x_i) - f(x_i)|^p``."""
    if not p >= 1:
        raise ConfigError("p", "p >= 1")
    pts = as_cloud(cloud).points
    r = np.abs(_values(g, pts) - _values(f, pts))
    return float(np.mean(r if p == 1 else r ** p))


def best_constant(y: np.ndarray, p: float) -> float:
    """Minimiser over constants ``c`` of ``mean |y - c|^p`` (mean for p=2, median for p=1)."""
    if p == 2:
        return float(np.mean(y))
    if p == 1:
        return float(np.median(y))
    from scipy.optimize import minimize_scalar
    res = minimize_scalar(lambda c: np.mean(np.abs(y - c) ** p), bounds=(y.min(), y.max()), method="bounded")
    return float(res.x)


def constant_network(spec: MlpSpec, c: float) -> MlpParams:
    params = MlpParams.zeros(spec)
    params.biases[-1][0] = c
    return params


@dataclass
class TrainSettings:
    restarts: int = 5
    steps: int = 5000
    lr: float = 1e-2
    mode: str = "best-of-restarts"
    spectral_cap: Optional[float] = None
    baselines: bool = True

    def __post_init__(self):
        if self.restarts < 1:
            raise ConfigError("train.restarts", "restarts >= 1")
        if self.steps < 1:
            raise ConfigError("train.steps", "steps >= 1")
        if not self.lr > 0:
            raise ConfigError("train.lr", "lr > 0")
        if self.mode not in MODES:
            raise ConfigError("train.mode", f"one of {', '.join(MODES)}")
        if self.spectral_cap is not None and not self.spectral_cap > 0:
            raise ConfigError("train.spectral_cap", "spectral_cap > 0")


@dataclass
class LossTrace:
    losses: list[np.ndarray]  # one per restart (empty array for a diverged restart)
    finals: list[float]  # returned loss of each restart (inf if diverged)
    best_restart: int
    final_loss: float

    def rows(self):
        for r, arr in enumerate(self.losses):
            for i, v in enumerate(arr):
                yield i, float(v), r

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "loss", "restart"])
            for i, v, r in self.rows():
                w.writerow([i, repr(v), r])


@dataclass
class TrainedModel:
    spec: MlpSpec
    params: MlpParams
    trace: LossTrace
    train_points: PointCloud
    p: float
    mode: str
    cap_binds: int = 0

    @property
    def final_loss(self) -> float:
        return self.trace.final_loss

    def __call__(self, x) -> np.ndarray:
        return self.params(x)

    def save(self, model_path, trace_path=None) -> None:
        save_params(self.params, model_path)
        if trace_path is not None:
            self.trace.write_csv(trace_path)


def _loss_and_grad(params: MlpParams, x: np.ndarray, y: np.ndarray, p: float):
    n = x.shape[0]
    out, cache = forward_cache(params, x)
    r = out - y
    a = np.abs(r)
    if p == 1:
        loss = float(np.mean(a))
        dout = np.sign(r) / n
    elif p == 2:
        loss = float(np.mean(a * a))
        dout = 2.0 * r / n
    else:
        loss = float(np.mean(a ** p))
        dout = p * a ** (p - 1) * np.sign(r) / n
    gw, gb = backward(params, cache, dout)
    return loss, gw, gb


def loss_gradient(params: MlpParams, cloud, f: Callable, p: float = 2) -> tuple[float, np.ndarray]:
    """Discrete loss and its gradient w.r.t. the flat parameter vector."""
    pts = as_cloud(cloud).points
    loss, gw, gb = _loss_and_grad(params, pts, _values(f, pts), p)
    flat = []
    for w, b in zip(gw, gb):
        flat += [w.ravel(), b]
    return loss, np.concatenate(flat)


def _adam_run(spec, x, y, p, settings: TrainSettings, rng, candidates):
    params = MlpParams.init(spec, rng)
    if settings.mode == "single-run-local":
        # start at the zero function so the kept best iterate never loses to it
        params.weights[-1][:] = 0.0
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m = [np.zeros_like(a) for a in params.weights + params.biases]
    v = [np.zeros_like(a) for a in params.weights + params.biases]
    trace = np.empty(settings.steps + 1)
    best_loss, best = np.inf, None
    binds = 0
    for t in range(settings.steps + 1):
        # overflow is how divergence shows up; it is handled just below
        with np.errstate(over="ignore", invalid="ignore"):
            loss, gw, gb = _loss_and_grad(params, x, y, p)
        if not np.isfinite(loss):
            return None, trace[:t], binds
        trace[t] = loss
        if loss < best_loss:
            best_loss, best = loss, params.copy()
        if t == settings.steps:
            break
        arrays = params.weights + params.biases
        grads = gw + gb
        c1, c2 = 1 - beta1 ** (t + 1), 1 - beta2 ** (t + 1)
        for a, g, mk, vk in zip(arrays, grads, m, v):
            mk *= beta1
            mk += (1 - beta1) * g
            vk *= beta2
            vk += (1 - beta2) * g * g
            a -= settings.lr * (mk / c1) / (np.sqrt(vk / c2) + eps)
        if settings.spectral_cap is not None:
            binds += project_spectral(params, settings.spectral_cap)
    for cand, cand_loss in candidates:
        if cand_loss < best_loss:
            best_loss, best = cand_loss, cand.copy()
    return best, trace, binds


def train(spec: MlpSpec, cloud, f: Callable, p: float = 2, settings: Optional[TrainSettings] = None,
          seed: Seed = Seed(0)) -> TrainedModel:
    """Approximately minimise the discrete loss over the network parameters.

    Each run keeps its best iterate. ``best-of-restarts`` returns the
    lowest-loss run; with ``settings.baselines`` the zero network and the best
    constant network are also candidates, so the result never has a larger
    loss than either. ``single-run-local`` returns the single run it made,
    whatever its quality; that run starts from a zero output layer.
    """
    settings = settings or TrainSettings()
    if not p >= 1:
        raise ConfigError("p", "p >= 1")
    cloud = as_cloud(cloud)
    if cloud.dim != spec.input_dim:
        raise ConfigError("network.dims", f"input dim {spec.input_dim} != data dim {cloud.dim}")
    x = cloud.points
    y = _values(f, x)
    candidates = []
    if settings.baselines and settings.mode == "best-of-restarts":
        zero = MlpParams.zeros(spec)
        const = constant_network(spec, best_constant(y, p))
        candidates = [(zero, discrete_loss(zero, cloud, f, p)), (const, discrete_loss(const, cloud, f, p))]

    runs = 1 if settings.mode == "single-run-local" else settings.restarts
    results, traces, finals, binds = [], [], [], 0
    for r in range(runs):
        best, trace, b = _adam_run(spec, x, y, p, settings, seed.spawn(r).rng(), candidates)
        binds += b
        traces.append(trace)
        if best is None:
            log.warning("restart %d diverged (non-finite loss); discarded", r)
            results.append(None)
            finals.append(float("inf"))
            continue
        results.append(best)
        finals.append(discrete_loss(best, cloud, f, p))
    if all(res is None for res in results):
        raise TrainingFailed("all restarts diverged")
    best_r = int(np.argmin(finals))
    params = results[best_r]
    trace = LossTrace(traces, finals, best_r, discrete_loss(params, cloud, f, p))
    return TrainedModel(spec, params, trace, cloud, p, settings.mode, binds)


@dataclass(frozen=True)
class RiskEstimate:
    mean_pow: float  # Monte-Carlo mean of |g - f|^p
    se: float  # its standard error
    norm: float  # mean_pow ** (1/p)
    M: int

    def to_dict(self) -> dict:
        return asdict(self)


def population_risk_estimate(g, f: Callable, dist: SamplingDistribution, M: int, p: float,
                             seed: Seed) -> RiskEstimate:
    """Estimate ``||g - f||_p^p = E|g(Y) - f(Y)|^p`` from ``M`` fresh samples."""
    if M < 100:
        raise ConfigError("M", "M >= 100")
    y = sample_points(dist, M, seed).points
    vals = np.abs(_values(g, y) - _values(f, y)) ** p
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / np.sqrt(M))
    return RiskEstimate(mean, se, mean ** (1.0 / p), M)


def mc_integration_error(g, f: Callable, cloud, dist: SamplingDistribution, M: int, p: float,
                         seed: Seed) -> float:
    """Signed ``||g - f||_p^p`` estimate minus the discrete loss on ``cloud``."""
    return population_risk_estimate(g, f, dist, M, p, seed).mean_pow - discrete_loss(g, cloud, f, p)


def train_on_sample(spec: MlpSpec, f: TargetFunction, dist: SamplingDistribution, N: int, p: float,
                    settings: TrainSettings, seed: Seed) -> TrainedModel:
    """Draw ``N`` training points with ``seed.spawn(0)`` and train with ``seed.spawn(1)``."""
    cloud = sample_points(dist, N, seed.spawn(0))
    return train(spec, cloud, f, p, settings, seed.spawn(1))
