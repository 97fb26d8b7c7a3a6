"""Generalisation-error certificate for a trained interpolant.

For any ``u`` whose residual ``u - f`` is L-Lipschitz and any probability
measure ``mu``,

    ||u - f||_{L^p(mu)} <= (discrete loss of u)^{1/p} + L * W_p(mu, mu_N).

Here ``mu`` is a reference empirical measure ``mu_ref``, so both sides are
computed exactly and the inequality becomes a machine-checkable statement.
The gap between ``mu_ref`` and the sampling law is reported separately as a
Monte-Carlo risk estimate.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CertificateViolation, ConfigError
from .jobs import parallel_map
from .measures import EmpiricalMeasure, SamplingDistribution, Seed, pushforward_residual, sample_points
from .network import MlpSpec, lipschitz_upper
from .training import (TargetFunction, TrainedModel, TrainSettings, discrete_loss,
                       population_risk_estimate, train_on_sample)
from .transport import sinkhorn, wasserstein, wasserstein_1d_quantile

CSV_COLUMNS = ("seed", "N", "M_ref", "p", "empirical_term", "lipschitz", "matching_term",
               "bound", "measured_risk", "exact")
SOUNDNESS_SLACK = 1e-9
# replicate mu_N up to this many atoms to keep the matching exact when M_ref = k * N
EXACT_ASSIGNMENT_LIMIT = 2048


@dataclass(frozen=True)
class BoundCertificate:
    empirical_term: float
    lipschitz: float
    matching_term: float
    bound: float
    measured_risk: float
    N: int
    M_ref: int
    p: float
    seed: Seed
    exact: bool
    method: str = "exact-assignment"
    residual: float = 0.0
    pushforward_term: Optional[float] = None

    @property
    def holds(self) -> bool:
        return self.measured_risk <= self.bound + SOUNDNESS_SLACK

    def with_lipschitz(self, lipschitz: float) -> "BoundCertificate":
        d = asdict(self)
        d["seed"] = self.seed
        d["lipschitz"] = lipschitz
        d["bound"] = self.empirical_term + lipschitz * self.matching_term
        return BoundCertificate(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seed"] = seed_label(self.seed)
        return d

    def csv_row(self) -> list:
        d = self.to_dict()
        return [d[k] if not isinstance(d[k], float) else repr(d[k]) for k in CSV_COLUMNS]


def seed_label(seed: Seed) -> str:
    return f"{seed.value}:{seed.stream}"


def append_csv(path, certificates) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(CSV_COLUMNS)
        for c in certificates:
            w.writerow(c.csv_row())


def _matching_term(mu_ref: EmpiricalMeasure, mu_n: EmpiricalMeasure, p: float,
                   exact_limit: int) -> tuple[float, bool, str, float]:
    M, N = mu_ref.n, mu_n.n
    if M == N or mu_ref.dim == 1:
        res = wasserstein(mu_ref, mu_n, p)
        return res.distance, True, res.method, 0.0
    if M % N == 0 and M <= exact_limit:
        # k copies of each atom of mu_N is the same measure with M atoms
        rep = EmpiricalMeasure.of(np.repeat(mu_n.atoms, M // N, axis=0))
        res = wasserstein(mu_ref, rep, p)
        return res.distance, True, res.method, 0.0
    res = sinkhorn(mu_ref, mu_n, p)
    return res.distance, False, res.method, res.residual


def certify(model: TrainedModel, f: TargetFunction, dist: SamplingDistribution, M_ref: Optional[int] = None,
            p: Optional[float] = None, seed: Seed = Seed(0),
            exact_limit: int = EXACT_ASSIGNMENT_LIMIT) -> BoundCertificate:
    """Certificate for ``model`` against a fresh reference cloud of ``M_ref`` points.

    ``M_ref`` defaults to the training size. The Lipschitz constant is
    ``lipschitz_upper(u) + Lip(f)``. Exact certificates that fail raise
    :class:`CertificateViolation`.
    """
    cloud = model.train_points
    N = cloud.n
    M_ref = N if M_ref is None else int(M_ref)
    p = model.p if p is None else p
    if M_ref < 1:
        raise ConfigError("M_ref", "M_ref >= 1")
    mu_n = EmpiricalMeasure(cloud)
    mu_ref = EmpiricalMeasure(sample_points(dist, M_ref, seed))

    emp = discrete_loss(model, cloud, f, p) ** (1.0 / p)
    lip = lipschitz_upper(model.params) + f.lipschitz(cloud.dim)
    w, exact, method, residual = _matching_term(mu_ref, mu_n, p, exact_limit)
    risk = discrete_loss(model, mu_ref.cloud, f, p) ** (1.0 / p)
    push = wasserstein_1d_quantile(pushforward_residual(model, f, mu_ref).atoms,
                                   pushforward_residual(model, f, mu_n).atoms, p).distance
    cert = BoundCertificate(emp, lip, w, emp + lip * w, risk, N, M_ref, p, seed, exact, method, residual, push)
    if exact and not cert.holds:
        raise CertificateViolation(
            f"measured risk {risk!r} exceeds exact bound {cert.bound!r}; solver or Lipschitz bug")
    return cert


@dataclass
class CertificateSummary:
    reps: int
    means: dict
    ses: dict
    all_hold: bool
    inf_proxy: Optional[float] = None
    inf_proxy_provenance: str = ""
    certificates: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"reps": self.reps, "means": self.means, "ses": self.ses, "all_hold": self.all_hold,
                "inf_proxy": self.inf_proxy, "inf_proxy_provenance": self.inf_proxy_provenance}


def _one_certificate(job):
    spec, f, dist, N, p, settings, M_ref, seed = job
    model = train_on_sample(spec, f, dist, N, p, settings, seed)
    return certify(model, f, dist, M_ref, p, seed.spawn(2))


def expected_certificate(spec: MlpSpec, f: TargetFunction, dist: SamplingDistribution, N: int, p: float,
                         settings: TrainSettings, reps: int, seed: Seed, M_ref: Optional[int] = None,
                         floor_N: Optional[int] = None, floor_settings: Optional[TrainSettings] = None,
                         M_risk: int = 20_000, workers: Optional[int] = None) -> CertificateSummary:
    """Monte-Carlo means and standard errors of every certificate term over ``reps`` realisations.

    With ``floor_N`` set, a high-budget run on ``floor_N`` points is trained
    and its estimated ``||v - f||_p`` stands in for the infimum over the
    network class.
    """
    if reps < 10:
        raise ConfigError("reps", "reps >= 10")
    jobs = [(spec, f, dist, N, p, settings, M_ref, seed.spawn(r)) for r in range(reps)]
    certs = parallel_map(_one_certificate, jobs, workers)
    keys = ("measured_risk", "empirical_term", "matching_term", "bound", "lipschitz")
    means, ses = {}, {}
    for k in keys:
        v = np.array([getattr(c, k) for c in certs])
        means[k] = float(v.mean())
        ses[k] = float(v.std(ddof=1) / np.sqrt(len(v)))
    summary = CertificateSummary(reps, means, ses, all(c.holds for c in certs if c.exact), certificates=certs)
    if floor_N is not None:
        fs = floor_settings or TrainSettings(restarts=2 * settings.restarts, steps=2 * settings.steps,
                                             lr=settings.lr)
        v = train_on_sample(spec, f, dist, floor_N, p, fs, seed.spawn(10**6))
        est = population_risk_estimate(v, f, dist, M_risk, p, seed.spawn(10**6 + 1))
        summary.inf_proxy = est.norm
        summary.inf_proxy_provenance = (
            f"population risk of a best-of-{fs.restarts} run, {fs.steps} steps, on N={floor_N} points "
            f"(M={M_risk} Monte-Carlo samples, se of p-th power {est.se:.3g})")
    return summary
