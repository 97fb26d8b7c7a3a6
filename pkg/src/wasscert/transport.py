"""Wasserstein-p distances between empirical measures.

Equal-size uniform measures are handled exactly: the optimal plan is a
permutation, found by a linear assignment on the matrix ``|x_i - y_j|^p``.
Other marginals go through the log-domain Sinkhorn solver.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .errors import DimensionMismatch, SinkhornDiverged, UnsupportedMarginals
from .measures import EmpiricalMeasure

BRUTE_FORCE_MAX = 8


@dataclass(frozen=True)
class TransportPlan:
    pairing: np.ndarray  # pairing[i] = index of the target atom receiving source atom i
    cost: float
    order: float


@dataclass(frozen=True)
class WassersteinResult:
    distance: float
    method: str
    plan: Optional[TransportPlan] = None
    residual: float = 0.0
    iterations: int = 0

    def to_dict(self) -> dict:
        return {"distance": self.distance, "method": self.method, "residual": self.residual}


def _check_order(p):
    if not p >= 1:
        raise ValueError(f"order p must be >= 1, got {p}")


def _check_pair(mu: EmpiricalMeasure, nu: EmpiricalMeasure, equal_size=True):
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    if equal_size and mu.n != nu.n:
        raise UnsupportedMarginals(
            f"exact solvers need equal atom counts (got {mu.n} and {nu.n}); use sinkhorn")


def cost_matrix(x: np.ndarray, y: np.ndarray, p: float) -> np.ndarray:
    c = cdist(x, y, metric="euclidean")
    return c if p == 1 else c ** p


def _root(cost: float, p: float) -> float:
    cost = max(cost, 0.0)
    return cost if p == 1 else cost ** (1.0 / p)


def wasserstein_exact(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float = 2) -> WassersteinResult:
    _check_order(p)
    _check_pair(mu, nu)
    c = cost_matrix(mu.atoms, nu.atoms, p)
    rows, cols = linear_sum_assignment(c)
    pairing = np.empty(mu.n, dtype=np.intp)
    pairing[rows] = cols
    cost = float(c[rows, cols].sum() / mu.n)
    return WassersteinResult(_root(cost, p), "exact-assignment", TransportPlan(pairing, cost, p))


def wasserstein_1d(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float = 2) -> WassersteinResult:
    """Monotone (sorted) coupling; O(n log n)."""
    _check_order(p)
    if mu.dim != 1 or nu.dim != 1:
        raise DimensionMismatch("wasserstein_1d needs one-dimensional measures")
    _check_pair(mu, nu)
    x, y = mu.atoms[:, 0], nu.atoms[:, 0]
    ix, iy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    gaps = np.abs(x[ix] - y[iy])
    cost = float(np.mean(gaps if p == 1 else gaps ** p))
    pairing = np.empty(mu.n, dtype=np.intp)
    pairing[ix] = iy
    return WassersteinResult(_root(cost, p), "exact-1d", TransportPlan(pairing, cost, p))


def wasserstein_1d_quantile(x, y, p: float = 2) -> WassersteinResult:
    """Exact W_p between uniform empirical measures on R of any sizes.

    Integrates ``|F^{-1}(t) - G^{-1}(t)|^p`` over the merged quantile
    breakpoints, kept as integers on the common grid ``1/(n m)``.
    """
    _check_order(p)
    xs = np.sort(np.asarray(x, dtype=np.float64).reshape(-1))
    ys = np.sort(np.asarray(y, dtype=np.float64).reshape(-1))
    n, m = xs.size, ys.size
    if n == 0 or m == 0:
        raise ValueError("empty measure")
    ticks = np.union1d(np.arange(1, n + 1, dtype=np.int64) * m, np.arange(1, m + 1, dtype=np.int64) * n)
    left = np.concatenate([[0], ticks[:-1]])
    widths = (ticks - left) / float(n * m)
    gaps = np.abs(xs[left // m] - ys[left // n])
    cost = float(np.sum(widths * (gaps if p == 1 else gaps ** p)))
    return WassersteinResult(_root(cost, p), "exact-1d")


def wasserstein_to_dirac(mu: EmpiricalMeasure, p: float = 2, at: Optional[np.ndarray] = None) -> WassersteinResult:
    """Distance to a point mass (the origin by default): the only plan is the product one."""
    _check_order(p)
    x = mu.atoms if at is None else mu.atoms - np.asarray(at, dtype=float).reshape(1, -1)
    norms = np.linalg.norm(x, axis=1)
    cost = float(np.mean(norms ** p))
    return WassersteinResult(_root(cost, p), "dirac", TransportPlan(np.zeros(mu.n, dtype=np.intp), cost, p))


def brute_force_wasserstein(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float = 2) -> WassersteinResult:
    """Enumerate all n! bijections. Testing oracle only."""
    _check_order(p)
    _check_pair(mu, nu)
    n = mu.n
    if n > BRUTE_FORCE_MAX:
        raise ValueError(f"brute force refused for n={n} > {BRUTE_FORCE_MAX}")
    c = cost_matrix(mu.atoms, nu.atoms, p)
    best, best_perm = np.inf, None
    rows = np.arange(n)
    for perm in itertools.permutations(range(n)):
        total = c[rows, perm].sum()
        if total < best:
            best, best_perm = total, perm
    cost = float(best / n)
    return WassersteinResult(_root(cost, p), "brute-force",
                             TransportPlan(np.array(best_perm, dtype=np.intp), cost, p))


def sinkhorn(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float = 2,
             epsilon: Optional[float] = None, tol: float = 1e-8,
             max_iter: int = 10_000, a: Optional[np.ndarray] = None,
             b: Optional[np.ndarray] = None) -> WassersteinResult:
    """Entropic optimal transport in the log domain.

    ``epsilon`` defaults to 1% of the median cost entry. The regularisation is
    annealed from the largest cost entry down to ``epsilon`` by halving, with
    warm-started dual potentials. At the final ``epsilon`` plain Sinkhorn
    sweeps run until the marginal violation drops below ``NEWTON_SWITCH``,
    after which Newton steps on the semi-dual drive it below ``tol``. Sweeps
    alone stall for small ``epsilon``: their contraction factor approaches 1.

    Returns ``<P, C>^{1/p}`` for the regularised plan ``P`` rounded onto the
    exact marginals, so the value is the cost of a genuine coupling.
    ``residual`` is the max marginal violation before rounding. ``max_iter``
    caps sweeps plus Newton steps.
    """
    _check_order(p)
    _check_pair(mu, nu, equal_size=False)
    c = cost_matrix(mu.atoms, nu.atoms, p)
    a = mu.weights if a is None else np.asarray(a, dtype=float)
    b = nu.weights if b is None else np.asarray(b, dtype=float)
    if epsilon is None:
        med = float(np.median(c))
        epsilon = 0.01 * med if med > 0 else 1e-3
    if not epsilon > 0 or not tol > 0:
        raise ValueError("epsilon and tol must be positive")
    # the Newton system lives on the column side; keep that side the small one
    if c.shape[1] > c.shape[0]:
        c, a, b = c.T, b, a
    plan, residual, it = _entropic_plan(c, a, b, epsilon, tol, max_iter)
    plan = round_to_marginals(plan, a, b)
    cost = float(np.sum(plan * c))
    return WassersteinResult(_root(cost, p), "sinkhorn", None, residual, it)


NEWTON_SWITCH = 1e-3  # relative to max column weight


def _rows_exact(c, loga, b, g, eps):
    f = eps * (loga - logsumexp((g[None, :] - c) / eps, axis=1))
    plan = np.exp((f[:, None] + g[None, :] - c) / eps)
    return plan, plan.sum(axis=0), float(np.exp(loga) @ f + b @ g)


def _entropic_plan(c, a, b, epsilon, tol, max_iter):
    loga, logb = np.log(a), np.log(b)
    stages = [epsilon]
    while stages[-1] < c.max():
        stages.append(2 * stages[-1])
    stages.reverse()
    # potentials f, g are kept in cost units so they carry over between stages
    f = np.zeros(c.shape[0])
    g = np.zeros(c.shape[1])
    residual = np.inf
    it = 0
    for stage, eps in enumerate(stages):
        final = stage == len(stages) - 1
        stage_tol = max(tol, (NEWTON_SWITCH if final else 1e-3) * float(np.max(b)))
        while it < max_iter:
            it += 1
            g = eps * (logb - logsumexp((f[:, None] - c) / eps, axis=0))
            f = eps * (loga - logsumexp((g[None, :] - c) / eps, axis=1))
            if it % 5:
                continue
            col = np.exp(logsumexp((f[:, None] + g[None, :] - c) / eps, axis=0))
            residual = float(np.max(np.abs(col - b)))
            if not np.isfinite(residual):
                raise SinkhornDiverged("non-finite marginal residual", residual)
            if residual <= stage_tol:
                break
        else:
            raise SinkhornDiverged(f"no convergence in {max_iter} iterations", residual)
    # Newton ascent on the concave semi-dual in g; its gradient is b - column sums
    eps = epsilon
    plan, s, obj = _rows_exact(c, loga, b, g, eps)
    residual = float(np.max(np.abs(s - b)))
    while residual > tol:
        if it >= max_iter:
            raise SinkhornDiverged(f"no convergence in {max_iter} iterations", residual)
        it += 1
        hess = (np.diag(s) - plan.T @ (plan / a[:, None])) / eps
        step = np.linalg.lstsq(hess, b - s, rcond=None)[0]
        slope = float((b - s) @ step)
        t = 1.0
        while True:
            trial = _rows_exact(c, loga, b, g + t * step, eps)
            if trial[2] >= obj + 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        g = g + t * step
        plan, s, obj = trial
        residual = float(np.max(np.abs(s - b)))
        if not np.isfinite(residual):
            raise SinkhornDiverged("non-finite marginal residual", residual)
    return plan, residual, it


def round_to_marginals(plan: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Project an approximate plan onto the coupling set of (a, b).

    Scale down over-full rows and columns, then spread the missing mass as a
    rank-one correction. The result is a genuine coupling, so its cost is an
    upper bound on the optimal transport cost.
    """
    plan = plan * np.minimum(a / np.maximum(plan.sum(axis=1), 1e-300), 1.0)[:, None]
    plan = plan * np.minimum(b / np.maximum(plan.sum(axis=0), 1e-300), 1.0)[None, :]
    err_a = a - plan.sum(axis=1)
    err_b = b - plan.sum(axis=0)
    mass = err_a.sum()
    if mass > 0:
        plan = plan + np.outer(err_a, err_b) / mass
    return plan


def wasserstein(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float = 2, **sinkhorn_kw) -> WassersteinResult:
    """Dispatch: exact in 1-D, assignment for equal sizes, Sinkhorn otherwise."""
    if mu.dim == 1 and nu.dim == 1:
        if mu.n == nu.n:
            return wasserstein_1d(mu, nu, p)
        return wasserstein_1d_quantile(mu.atoms, nu.atoms, p)
    if mu.n == nu.n:
        return wasserstein_exact(mu, nu, p)
    return sinkhorn(mu, nu, p, **sinkhorn_kw)
