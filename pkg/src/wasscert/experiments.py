"""Experiment drivers for matching rates and loss/risk convergence sweeps.

Every driver splits work into (cell, rep) jobs with their own seed stream
``seed.spawn(cell).spawn(rep)`` and folds the results back in (cell, rep)
order, so output is independent of scheduling.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bounds import certify, seed_label
from .errors import ConfigError, NumericalError, RateFitError
from .jobs import parallel_map
from .measures import EmpiricalMeasure, SamplingDistribution, Seed, sample_points
from .network import MlpParams, MlpSpec
from .training import (TargetFunction, TrainSettings, best_constant, discrete_loss,
                       population_risk_estimate, train_on_sample)
from .transport import wasserstein

CELL_COLUMNS = ("axis_value", "rep", "loss", "risk", "risk_se", "wp", "seed")


@dataclass
class Cell:
    axis_value: int
    rep: int
    seed: Seed
    loss: Optional[float] = None
    risk: Optional[float] = None  # Monte-Carlo estimate of ||u - f||_p^p
    risk_se: Optional[float] = None
    wp: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def row(self) -> list:
        def fmt(v):
            return "" if v is None else repr(float(v))
        return [self.axis_value, self.rep, fmt(self.loss), fmt(self.risk), fmt(self.risk_se),
                fmt(self.wp), seed_label(self.seed)]


def write_cells(path, cells: Sequence[Cell]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CELL_COLUMNS)
        for c in cells:
            w.writerow(c.row())


def _increasing(grid, name):
    grid = [int(v) for v in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError(name, "grid must be strictly increasing")
    return grid


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


# ---------------------------------------------------------------- matching rates

@dataclass
class RateFitResult:
    Ns: list
    means: list
    ses: list
    slope: float
    slope_se: float
    intercept: float
    p: float
    dim: int
    cells: list = field(repr=False, default_factory=list)

    @property
    def prefactor(self) -> float:
        return float(np.exp(self.intercept))

    @property
    def stated_exponent(self) -> float:
        """Exponent of the ``N^{-p/d}`` upper-bound form, reported beside the measured slope."""
        return -self.p / self.dim

    def to_dict(self) -> dict:
        return {"Ns": self.Ns, "means": self.means, "ses": self.ses, "slope": self.slope,
                "slope_se": self.slope_se, "intercept": self.intercept, "prefactor": self.prefactor,
                "stated_exponent": self.stated_exponent, "p": self.p, "dim": self.dim}


def fit_loglog(Ns, means, ses) -> tuple[float, float, float]:
    """Unweighted least squares of log(mean) on log(N); slope SE by the delta method."""
    x = np.log(np.asarray(Ns, dtype=float))
    m = np.asarray(means, dtype=float)
    if np.any(m <= 0):
        raise RateFitError("log-log fit needs strictly positive means")
    y = np.log(m)
    xc = x - x.mean()
    w = xc / np.sum(xc ** 2)
    slope = float(np.sum(w * y))
    intercept = float(y.mean() - slope * x.mean())
    rel = np.asarray(ses, dtype=float) / m
    return slope, float(np.sqrt(np.sum((w * rel) ** 2))), intercept


def _two_sample(job):
    dist, N, p, seed, independent = job
    a = sample_points(dist, N, seed.spawn(0))
    b = sample_points(dist, N, seed.spawn(1)) if independent else a
    return wasserstein(EmpiricalMeasure(a), EmpiricalMeasure(b), p).distance


def rate_fit(dist: SamplingDistribution, p: float, Ns: Sequence[int], reps: int, seed: Seed,
             independent: bool = True, workers: Optional[int] = None) -> RateFitResult:
    """Estimate ``E W_p(mu, mu_N)`` by ``W_p(mu_N, mu'_N)`` for two independent samples, then fit the slope."""
    Ns = _increasing(Ns, "Ns")
    if len(set(Ns)) < 4:
        raise RateFitError("rate fit needs at least 4 distinct N values")
    if any(n % 2 for n in Ns):
        raise ConfigError("Ns", "every N must be even")
    if reps < 20:
        raise ConfigError("reps", "reps >= 20")
    jobs = [(dist, N, p, seed.spawn(i).spawn(r), independent) for i, N in enumerate(Ns) for r in range(reps)]
    values = parallel_map(_two_sample, jobs, workers)
    cells = [Cell(job[1], k % reps, job[3], wp=v) for k, (job, v) in enumerate(zip(jobs, values))]
    means, ses = [], []
    for i in range(len(Ns)):
        m, s = _mean_se(values[i * reps:(i + 1) * reps])
        means.append(m)
        ses.append(s)
    slope, slope_se, intercept = fit_loglog(Ns, means, ses)
    return RateFitResult(Ns, means, ses, slope, slope_se, intercept, p, dist.dim, cells)


# ---------------------------------------------------------------- convergence sweeps

@dataclass
class ConvergenceSweep:
    axis: str
    grid: list
    losses: list  # per grid value, one loss per rep (nan for a failed cell)
    means: list
    ses: list
    cells: list = field(repr=False, default_factory=list)
    floor: Optional[float] = None
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"axis": self.axis, "grid": self.grid, "means": self.means, "ses": self.ses,
                "floor": self.floor, **self.summary}


def _train_cell(job):
    spec, f, dist, N, p, settings, seed, M_risk, axis_value, rep = job
    cell = Cell(axis_value, rep, seed)
    try:
        model = train_on_sample(spec, f, dist, N, p, settings, seed)
        cert = certify(model, f, dist, None, p, seed.spawn(2))
    except NumericalError as exc:
        cell.extra["error"] = str(exc)
        return cell
    est = population_risk_estimate(model, f, dist, M_risk, p, seed.spawn(3))
    y = f(model.train_points.points)
    const_loss = float(np.mean(np.abs(y - best_constant(y, p)) ** p))
    cell.loss, cell.risk, cell.risk_se, cell.wp = model.final_loss, est.mean_pow, est.se, cert.matching_term
    cell.extra.update(certificate=cert, const_loss=const_loss,
                      zero_loss=discrete_loss(MlpParams.zeros(spec), model.train_points, f, p))
    return cell


def _collect(axis, grid, cells, reps):
    losses, means, ses = [], [], []
    for i in range(len(grid)):
        vals = [c.loss if c.loss is not None else np.nan for c in cells[i * reps:(i + 1) * reps]]
        losses.append(vals)
        good = [v for v in vals if np.isfinite(v)]
        m, s = _mean_se(good) if good else (np.nan, np.nan)
        means.append(m)
        ses.append(s)
    return ConvergenceSweep(axis, list(grid), losses, means, ses, cells)


def converge_n(spec: MlpSpec, f: TargetFunction, dist: SamplingDistribution, Ns: Sequence[int], reps: int,
               settings: TrainSettings, seed: Seed, p: float = 2, N_floor: Optional[int] = None,
               floor_settings: Optional[TrainSettings] = None, M_risk: int = 20_000,
               workers: Optional[int] = None) -> ConvergenceSweep:
    """Fixed architecture, growing sample size.

    The floor is the training loss of a high-budget run on ``N_floor`` points,
    a proxy for the best approximation error of the architecture. The floor
    model's own population risk is estimated too, as a fixed candidate ``v``
    with ``E[loss] <= ||v - f||_p^p``.
    """
    Ns = _increasing(Ns, "Ns")
    jobs = [(spec, f, dist, N, p, settings, seed.spawn(i).spawn(r), M_risk, N, r)
            for i, N in enumerate(Ns) for r in range(reps)]
    sweep = _collect("N", Ns, parallel_map(_train_cell, jobs, workers), reps)
    if N_floor is not None:
        if N_floor <= max(Ns):
            raise ConfigError("N_floor", "N_floor > max(Ns)")
        fs = floor_settings or TrainSettings(restarts=settings.restarts, steps=2 * settings.steps, lr=settings.lr)
        floor_model = train_on_sample(spec, f, dist, N_floor, p, fs, seed.spawn(10**6))
        sweep.floor = floor_model.final_loss
        v = population_risk_estimate(floor_model, f, dist, M_risk, p, seed.spawn(10**6 + 1))
        sweep.summary.update(floor_N=N_floor, floor_candidate_risk=v.mean_pow, floor_candidate_risk_se=v.se)
    sweep.summary.update(_cell_summary(sweep))
    return sweep


def _cell_summary(sweep: ConvergenceSweep) -> dict:
    reps = len(sweep.losses[0]) if sweep.losses else 0
    risk_means, const_means, bound_means, matching_means, cert_risk = [], [], [], [], []
    for i in range(len(sweep.grid)):
        cells = [c for c in sweep.cells[i * reps:(i + 1) * reps] if c.loss is not None]
        if not cells:
            for lst in (risk_means, const_means, bound_means, matching_means, cert_risk):
                lst.append(None)
            continue
        risk_means.append(float(np.mean([c.risk for c in cells])))
        const_means.append(float(np.mean([c.extra["const_loss"] for c in cells])))
        bound_means.append(float(np.mean([c.extra["certificate"].bound for c in cells])))
        matching_means.append(float(np.mean([c.wp for c in cells])))
        cert_risk.append(float(np.mean([c.extra["certificate"].measured_risk for c in cells])))
    failed = sum(1 for c in sweep.cells if c.loss is None)
    return {"risk_means": risk_means, "best_constant_loss_means": const_means,
            "certificate_bound_means": bound_means, "certificate_risk_means": cert_risk,
            "matching_term_means": matching_means,
            "failed_cells": failed}


def converge_width(widths: Sequence[int], f: TargetFunction, dist: SamplingDistribution, N: Optional[int],
                   p: float, reps: int, settings: TrainSettings, seed: Seed, schedule: Optional[str] = None,
                   activation: str = "relu", M_risk: int = 20_000,
                   workers: Optional[int] = None) -> ConvergenceSweep:
    """One-hidden-layer networks ``[d, w, 1]`` of growing width.

    ``N`` is fixed, or ``schedule="square"`` trains width ``w`` on ``w**2``
    points; the schedule reports, per rep, whether the population risk
    decreases strictly across the widths.
    """
    widths = _increasing(widths, "widths")
    if (N is None) == (schedule is None):
        raise ConfigError("N", "give exactly one of N and schedule")
    if schedule not in (None, "square"):
        raise ConfigError("schedule", "only 'square' (N = width**2) is supported")
    jobs = []
    for i, w in enumerate(widths):
        n_w = w * w if schedule == "square" else N
        spec = MlpSpec.hidden(dist.dim, [w], activation)
        # the rep index picks the seed stream, so every width sees the same sample stream
        jobs += [(spec, f, dist, n_w, p, settings, seed.spawn(r).spawn(i), M_risk, w, r) for r in range(reps)]
    sweep = _collect("width", widths, parallel_map(_train_cell, jobs, workers), reps)
    sweep.summary.update(_cell_summary(sweep))
    if schedule is not None:
        dec = 0
        for r in range(reps):
            risks = [sweep.cells[i * reps + r].risk for i in range(len(widths))]
            if all(v is not None for v in risks) and all(b < a for a, b in zip(risks, risks[1:])):
                dec += 1
        sweep.summary.update(schedule=schedule, Ns=[w * w for w in widths],
                             risk_strictly_decreasing_fraction=dec / reps)
    return sweep


def local_minimiser_study(spec: MlpSpec, f: TargetFunction, dist: SamplingDistribution, Ns: Sequence[int],
                          reps: int, seed: Seed, p: float = 2, settings: Optional[TrainSettings] = None,
                          M_risk: int = 20_000, workers: Optional[int] = None) -> ConvergenceSweep:
    """Single-run (possibly non-global) minimisers across sample sizes.

    Reports the largest observed loss (an empirical ``M(omega)``), per-N mean
    losses and risks, and the aggregated per-rep certificates.
    """
    settings = settings or TrainSettings(mode="single-run-local")
    if settings.mode != "single-run-local":
        raise ConfigError("train.mode", "local study needs mode single-run-local")
    sweep = converge_n(spec, f, dist, Ns, reps, settings, seed, p, None, None, M_risk, workers)
    losses = [v for row in sweep.losses for v in row if np.isfinite(v)]
    sweep.summary.update(
        max_loss=float(max(losses)) if losses else None,
        mean_risk_norm=[float(np.mean([c.risk ** (1 / p) for c in _row(sweep, i)])) for i in range(len(Ns))],
        mean_bound=sweep.summary["certificate_bound_means"],
        all_below_zero_network=all(c.loss <= c.extra["zero_loss"] for c in sweep.cells if c.loss is not None),
    )
    return sweep


def _row(sweep, i):
    reps = len(sweep.losses[0])
    return [c for c in sweep.cells[i * reps:(i + 1) * reps] if c.loss is not None]


def write_results(out_dir, config: dict, cells: Sequence[Cell], summary: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    write_cells(out / "cells.csv", cells)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    return out
