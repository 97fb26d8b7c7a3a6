"""Sampling distributions, point clouds and empirical measures.

Every distribution lives on a bounded box ``D`` so that all moments are finite.
Randomness is driven by :class:`Seed`, a ``(value, stream)`` pair mapped onto a
counter-based Philox generator; repetitions get their own stream through
:meth:`Seed.spawn` and never share generator state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError

_U64 = (1 << 64) - 1

KINDS = ("uniform-cube", "truncated-gaussian", "two-component-mixture")


@dataclass(frozen=True)
class Seed:
    value: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= self.value <= _U64 and 0 <= self.stream <= _U64):
            raise ConfigError("seed", "seed value and stream must be unsigned 64-bit integers")

    def spawn(self, index: int) -> "Seed":
        """Child seed for sub-job ``index``; distinct indices give independent streams."""
        ss = np.random.SeedSequence([self.value & 0xFFFFFFFF, self.value >> 32,
                                     self.stream & 0xFFFFFFFF, self.stream >> 32, int(index)])
        return Seed(self.value, int(ss.generate_state(2, np.uint64)[0]))

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence([self.value & 0xFFFFFFFF, self.value >> 32,
                                     self.stream & 0xFFFFFFFF, self.stream >> 32])
        return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SamplingDistribution:
    """Law of the sample points.

    ``uniform-cube`` is uniform on ``[0, side]^dim``. The Gaussian kinds are
    truncated to the box ``[low, high]^dim`` by rejection. The mixture draws
    component 0 with probability ``weights[0]``; its components share ``scale``
    and are centred at ``means[0]`` and ``means[1]`` (scalars, broadcast over
    coordinates).
    """

    kind: str
    dim: int
    side: float = 1.0
    mean: float = 0.5
    scale: float = 0.25
    low: float = 0.0
    high: float = 1.0
    means: tuple[float, float] = (0.25, 0.75)
    weights: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError("kind", f"must be one of {', '.join(KINDS)}")
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise ConfigError("dim", "dim >= 1")
        if self.kind == "uniform-cube":
            if not self.side > 0:
                raise ConfigError("side", "side > 0")
            return
        if not self.scale > 0:
            raise ConfigError("scale", "scale > 0")
        if not self.high > self.low:
            raise ConfigError("high", "high > low")
        if self.kind == "two-component-mixture":
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (2,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ConfigError("weights", "two non-negative weights summing to 1")
            if len(self.means) != 2:
                raise ConfigError("means", "exactly two component means")

    @property
    def bounds(self) -> tuple[float, float]:
        if self.kind == "uniform-cube":
            return 0.0, float(self.side)
        return float(self.low), float(self.high)

    def contains(self, points: np.ndarray) -> np.ndarray:
        lo, hi = self.bounds
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "dim": int(self.dim)}
        if self.kind == "uniform-cube":
            out["side"] = self.side
        elif self.kind == "truncated-gaussian":
            out.update(mean=self.mean, scale=self.scale, low=self.low, high=self.high)
        else:
            out.update(means=list(self.means), weights=list(self.weights),
                       scale=self.scale, low=self.low, high=self.high)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SamplingDistribution":
        allowed = {"kind", "dim", "side", "mean", "scale", "low", "high", "means", "weights"}
        for key in data:
            if key not in allowed:
                raise ConfigError(f"distribution.{key}", "unknown key")
        for key in ("kind", "dim"):
            if key not in data:
                raise ConfigError(f"distribution.{key}", "required")
        kw = dict(data)
        for key in ("side", "mean", "scale", "low", "high"):
            if key in kw and (isinstance(kw[key], bool) or not isinstance(kw[key], (int, float))):
                raise ConfigError(f"distribution.{key}", "must be a number")
        for key in ("means", "weights"):
            if key in kw:
                v = kw[key]
                if not isinstance(v, (list, tuple)) or any(isinstance(e, bool) or not isinstance(e, (int, float)) for e in v):
                    raise ConfigError(f"distribution.{key}", "must be a list of numbers")
                kw[key] = tuple(float(e) for e in v)
        if not isinstance(kw["dim"], int) or isinstance(kw["dim"], bool):
            raise ConfigError("distribution.dim", "must be an integer")
        try:
            return cls(**kw)
        except ConfigError as exc:
            raise ConfigError(f"distribution.{exc.key}", exc.constraint) from None


def _truncated_normal(rng, n, dim, centre, scale, lo, hi):
    out = np.empty((0, dim))
    while out.shape[0] < n:
        need = n - out.shape[0]
        draw = rng.normal(centre, scale, size=(max(2 * need, 16), dim))
        ok = np.all((draw >= lo) & (draw <= hi), axis=1)
        out = np.vstack([out, draw[ok]])
    return out[:n]


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("point cloud needs at least one point, shape (n, d)")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n


def sample_points(dist: SamplingDistribution, n: int, seed: Seed) -> PointCloud:
    """Draw ``n`` i.i.d. points from ``dist``; bit-identical for equal seeds."""
    if n < 1:
        raise ConfigError("n", "n >= 1")
    rng = seed.rng()
    if dist.kind == "uniform-cube":
        pts = dist.side * rng.random((n, dist.dim))
    elif dist.kind == "truncated-gaussian":
        pts = _truncated_normal(rng, n, dist.dim, dist.mean, dist.scale, dist.low, dist.high)
    else:
        comp = rng.random(n) >= dist.weights[0]
        pts = np.empty((n, dist.dim))
        for k in (0, 1):
            idx = np.flatnonzero(comp == bool(k))
            if idx.size:
                pts[idx] = _truncated_normal(rng, idx.size, dist.dim, dist.means[k],
                                             dist.scale, dist.low, dist.high)
    return PointCloud(pts)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform probability measure ``(1/n) sum_i delta_{x_i}`` on a cloud."""

    cloud: PointCloud

    @classmethod
    def of(cls, points) -> "EmpiricalMeasure":
        if isinstance(points, PointCloud):
            return cls(points)
        return cls(PointCloud(points))

    @property
    def atoms(self) -> np.ndarray:
        return self.cloud.points

    @property
    def n(self) -> int:
        return self.cloud.n

    @property
    def dim(self) -> int:
        return self.cloud.dim

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def moment(self, p: float) -> float:
        """p-th absolute moment ``(1/n) sum |x_i|^p`` (Euclidean norm)."""
        return float(np.mean(np.linalg.norm(self.atoms, axis=1) ** p))

    def integrate(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.mean(fn(self.atoms)))


def _evaluate(fn, points: np.ndarray) -> np.ndarray:
    return np.asarray(fn(points), dtype=np.float64).reshape(-1)


def pushforward_residual(g, f, mu: EmpiricalMeasure) -> EmpiricalMeasure:
    """Empirical measure on R with atoms ``g(x_i) - f(x_i)``.

    ``g`` and ``f`` take an ``(n, d)`` array and return ``n`` values.
    """
    r = _evaluate(g, mu.atoms) - _evaluate(f, mu.atoms)
    return EmpiricalMeasure(PointCloud(r.reshape(-1, 1)))


def as_cloud(points: Sequence | np.ndarray | PointCloud) -> PointCloud:
    return points if isinstance(points, PointCloud) else PointCloud(points)
