"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""
import json
import time

import numpy as np
import pytest

from oracles import fd_output_gradient, relative_error
from wasscert.bounds import SOUNDNESS_SLACK, certify
from wasscert.cli import run
from wasscert.experiments import converge_n, converge_width, rate_fit
from wasscert.measures import EmpiricalMeasure as EM
from wasscert.measures import SamplingDistribution, Seed, sample_points
from wasscert.network import MlpParams, MlpSpec, forward_backward
from wasscert.training import (TargetFunction, TrainSettings, discrete_loss, population_risk_estimate,
                               train_on_sample)
from wasscert.transport import brute_force_wasserstein, wasserstein_1d, wasserstein_exact, wasserstein_to_dirac

MASTER = 2024
ABS = TargetFunction("abs-offset", center=0.5)
SIN = TargetFunction("sinusoid", amplitude=1 / (2 * np.pi))


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {title}: {detail}")
        assert ok, detail
    return emit


def test_ot_correctness(report):
    rng = np.random.default_rng(MASTER)
    t = time.perf_counter()
    worst_brute = worst_1d = 0.0
    for _ in range(100):
        n, d, p = int(rng.integers(1, 8)), int(rng.integers(1, 4)), float(rng.choice([1, 2]))
        mu, nu = EM.of(rng.random((n, d))), EM.of(rng.random((n, d)))
        worst_brute = max(worst_brute, abs(wasserstein_exact(mu, nu, p).distance
                                           - brute_force_wasserstein(mu, nu, p).distance))
    for _ in range(100):
        n, p = int(rng.integers(1, 65)), float(rng.choice([1, 2]))
        mu, nu = EM.of(rng.random((n, 1))), EM.of(rng.random((n, 1)))
        worst_1d = max(worst_1d, abs(wasserstein_1d(mu, nu, p).distance - wasserstein_exact(mu, nu, p).distance))
    elapsed = time.perf_counter() - t
    ok = worst_brute <= 1e-12 and worst_1d <= 1e-10 and elapsed < 10.0
    report(1, "OT correctness", ok,
           f"max |exact-brute| {worst_brute:.1e} (<=1e-12), max |1d-exact| {worst_1d:.1e} (<=1e-10), {elapsed:.2f}s (<10s)")


def test_metric_axioms(report):
    rng = np.random.default_rng(MASTER + 1)
    worst_sym, worst_tri, self_zero = 0.0, -np.inf, True
    for _ in range(200):
        n, d, p = int(rng.integers(1, 17)), int(rng.integers(1, 4)), float(rng.choice([1, 2]))
        a, b, c = (EM.of(rng.random((n, d))) for _ in range(3))
        ab = wasserstein_exact(a, b, p).distance
        worst_sym = max(worst_sym, abs(ab - wasserstein_exact(b, a, p).distance))
        worst_tri = max(worst_tri, ab - wasserstein_exact(a, c, p).distance - wasserstein_exact(c, b, p).distance)
        self_zero &= wasserstein_exact(a, a, p).distance == 0.0
    ok = worst_sym <= 1e-12 and worst_tri <= 1e-9 and self_zero
    report(2, "metric axioms", ok,
           f"max asymmetry {worst_sym:.1e} (<=1e-12), max triangle excess {worst_tri:.1e} (<=1e-9), "
           f"W(mu,mu)=0 exactly: {self_zero}")


def test_dirac_identity(report):
    rng = np.random.default_rng(MASTER + 2)
    worst = 0.0
    for _ in range(100):
        n, d, p = int(rng.integers(1, 50)), int(rng.integers(1, 4)), float(rng.uniform(1, 4))
        x = rng.normal(size=(n, d))
        # plain loop over atoms as the oracle
        direct = (sum(float(np.sqrt(sum(v * v for v in row))) ** p for row in x) / n) ** (1 / p)
        worst = max(worst, abs(wasserstein_to_dirac(EM.of(x), p).distance - direct))
    report(3, "Dirac identity", worst <= 1e-12, f"max deviation {worst:.1e} (<=1e-12) on 100 measures")


def test_certificate_soundness(report):
    t = time.perf_counter()
    held, total, local_runs, worst_margin = 0, 0, 0, np.inf
    for r in range(50):
        d = (1, 2)[r % 2]
        f = (ABS, SIN)[(r // 2) % 2]
        N = (64, 256)[(r // 4) % 2]
        mode = ("best-of-restarts", "single-run-local")[(r // 8) % 2]
        dist = SamplingDistribution("uniform-cube", d)
        seed = Seed(MASTER, r)
        model = train_on_sample(MlpSpec.hidden(d, [16]), f, dist, N, 2,
                                TrainSettings(restarts=2, steps=1000, mode=mode), seed)
        cert = certify(model, f, dist, N, 2, seed.spawn(2))
        assert cert.exact and cert.M_ref == N
        total += 1
        held += cert.measured_risk <= cert.bound + SOUNDNESS_SLACK
        local_runs += mode == "single-run-local"
        worst_margin = min(worst_margin, cert.bound - cert.measured_risk)
    elapsed = time.perf_counter() - t
    ok = held == 50 and total == 50 and local_runs > 0 and elapsed < 300
    report(4, "certificate soundness", ok,
           f"{held}/{total} hold ({local_runs} single-run-local), smallest bound-risk margin {worst_margin:.3g}, "
           f"{elapsed:.1f}s (<300s)")


def test_expectation_identity(report):
    dist = SamplingDistribution("uniform-cube", 2)
    g = MlpParams.init(MlpSpec((2, 8, 1), "tanh"), np.random.default_rng(MASTER))
    losses = [discrete_loss(g, sample_points(dist, 32, Seed(MASTER, 1).spawn(k)), ABS, 2) for k in range(200)]
    mean, se = float(np.mean(losses)), float(np.std(losses, ddof=1) / np.sqrt(200))
    pop = population_risk_estimate(g, ABS, dist, 200_000, 2, Seed(MASTER, 2))
    combined = float(np.hypot(se, pop.se))
    gap = abs(mean - pop.mean_pow)
    report(5, "expectation identity", gap <= 3 * combined,
           f"mean loss {mean:.6g} vs population {pop.mean_pow:.6g}, |gap| {gap:.3g} <= 3*{combined:.3g}")


def test_matching_rates(report):
    t = time.perf_counter()
    grid = [64, 128, 256, 512, 1024]
    one = rate_fit(SamplingDistribution("uniform-cube", 1), 1, grid, 200, Seed(MASTER))
    three = rate_fit(SamplingDistribution("uniform-cube", 3), 1, grid, 100, Seed(MASTER))
    elapsed = time.perf_counter() - t
    ok = -0.57 <= one.slope <= -0.43 and -0.40 <= three.slope <= -0.26 and elapsed < 600
    report(6, "matching rates", ok,
           f"d=1 slope {one.slope:.3f}±{one.slope_se:.3f} in [-0.57,-0.43] (stated exponent {one.stated_exponent:g}); "
           f"d=3 slope {three.slope:.3f}±{three.slope_se:.3f} in [-0.40,-0.26] (stated exponent "
           f"{three.stated_exponent:.3g}); {elapsed:.1f}s (<600s)")


def test_width_convergence(report):
    t = time.perf_counter()
    sweep = converge_width([4, 16, 64], ABS, SamplingDistribution("uniform-cube", 1), 32, 2, 3,
                           TrainSettings(restarts=5, steps=5000), Seed(MASTER), M_risk=1000)
    elapsed = time.perf_counter() - t
    m = sweep.means
    monotone = all(b <= 1.1 * a for a, b in zip(m, m[1:]))
    ok = monotone and m[-1] <= 1e-3 and elapsed < 300
    report(7, "width convergence", ok,
           f"mean losses {['%.3g' % v for v in m]} nonincreasing within 10%: {monotone}, width 64 {m[-1]:.3g} (<=1e-3), "
           f"{elapsed:.1f}s (<300s)")


def test_sample_convergence(report):
    sweep = converge_n(MlpSpec((1, 8, 1)), SIN, SamplingDistribution("uniform-cube", 1), [64, 256, 1024], 3,
                       TrainSettings(), Seed(MASTER), 2, N_floor=8192, M_risk=20_000)
    limit = 1.5 * sweep.floor + 1e-3
    report(8, "sample convergence", sweep.means[-1] <= limit,
           f"mean losses {['%.3g' % v for v in sweep.means]}, N=1024 {sweep.means[-1]:.3g} <= 1.5*floor+1e-3 = "
           f"{limit:.3g} (floor {sweep.floor:.3g} at N=8192)")


def test_gradient_correctness(report):
    rng = np.random.default_rng(MASTER + 9)
    worst = 0.0
    for k in range(20):
        d = int(rng.integers(1, 4))
        spec = MlpSpec((d, int(rng.integers(2, 9)), int(rng.integers(2, 9)), 1), ("tanh", "relu")[k % 2])
        params = MlpParams.init(spec, rng)
        x = rng.random((1, d))
        _, gw, gb = forward_backward(params, x, np.ones(1))
        bp = np.concatenate([a for w, b in zip(gw, gb) for a in (w.ravel(), b)])
        worst = max(worst, relative_error(bp, fd_output_gradient(params, x, 1e-5)))
    report(9, "gradient correctness", worst <= 1e-6, f"max relative error {worst:.2e} (<=1e-6) on 20 pairs")


def test_reproducibility(report, tmp_path, capsys):
    train = {"restarts": 2, "steps": 300}
    configs = {
        "train": {"N": 32, "train": train},
        "certify": {"N": 32, "reps": 2, "train": train},
        "rate-fit": {"Ns": [8, 16, 32, 64], "reps": 20, "distribution": {"kind": "uniform-cube", "dim": 2}},
        "converge-n": {"Ns": [16, 32], "reps": 2, "train": train, "M_risk": 500},
        "converge-width": {"widths": [2, 4, 8], "N": 16, "reps": 2, "train": train, "M_risk": 500},
        "local-study": {"Ns": [16, 32], "reps": 2, "train": train, "M_risk": 500},
    }
    outputs = {"train": ("model.bin", "trace.csv"), "certify": ("certificates.csv",)}
    identical = []
    for command, extra in configs.items():
        cfg = tmp_path / f"{command}.json"
        cfg.write_text(json.dumps({"command": command, "seed": MASTER, **extra}))
        blobs = []
        for name in ("first", "second"):
            out = tmp_path / command / name
            assert run([command, "--config", str(cfg), "--out", str(out)]) == 0
            blobs.append([(out / f).read_bytes() for f in outputs.get(command, ("cells.csv",))])
        identical.append((command, blobs[0] == blobs[1]))
    capsys.readouterr()
    ok = all(flag for _, flag in identical)
    report(10, "reproducibility", ok, ", ".join(f"{c}: {'identical' if f else 'DIFFERENT'}" for c, f in identical))
