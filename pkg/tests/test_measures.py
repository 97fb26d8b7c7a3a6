import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wasscert.errors import ConfigError
from wasscert.measures import (EmpiricalMeasure, PointCloud, SamplingDistribution, Seed,
                               pushforward_residual, sample_points)
from wasscert.training import TargetFunction, discrete_loss

DISTS = [
    SamplingDistribution("uniform-cube", 1),
    SamplingDistribution("uniform-cube", 3, side=2.0),
    SamplingDistribution("truncated-gaussian", 2, mean=0.5, scale=0.3),
    SamplingDistribution("two-component-mixture", 2, means=(0.2, 0.8), weights=(0.3, 0.7), scale=0.1),
]


def test_uniform_small_sample_reproducible():
    d = SamplingDistribution("uniform-cube", 1)
    a = sample_points(d, 3, Seed(7)).points
    b = sample_points(d, 3, Seed(7)).points
    assert a.shape == (3, 1)
    assert np.all((a >= 0) & (a <= 1))
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("dist", DISTS, ids=lambda d: f"{d.kind}-{d.dim}")
def test_single_point_in_domain(dist):
    cloud = sample_points(dist, 1, Seed(3))
    assert cloud.n == 1
    assert dist.contains(cloud.points).all()


@pytest.mark.parametrize("dist", DISTS, ids=lambda d: f"{d.kind}-{d.dim}")
def test_support_containment(dist):
    cloud = sample_points(dist, 5000, Seed(11))
    assert dist.contains(cloud.points).all()


def test_uniform_mean_law_of_large_numbers():
    # analytic mean of U[0,1] is 1/2 per coordinate
    pts = sample_points(SamplingDistribution("uniform-cube", 2), 100_000, Seed(5)).points
    assert np.all(np.abs(pts.mean(axis=0) - 0.5) < 0.01)


def test_mixture_weights_respected():
    d = SamplingDistribution("two-component-mixture", 1, means=(0.1, 0.9), weights=(0.25, 0.75), scale=0.02)
    pts = sample_points(d, 40_000, Seed(2)).points[:, 0]
    frac_left = np.mean(pts < 0.5)
    assert abs(frac_left - 0.25) < 0.01


def test_seed_streams_differ_and_are_stable():
    s = Seed(42)
    d = SamplingDistribution("uniform-cube", 1)
    a = sample_points(d, 10, s.spawn(0)).points
    b = sample_points(d, 10, s.spawn(1)).points
    assert not np.array_equal(a, b)
    assert s.spawn(3) == Seed(42).spawn(3)
    assert s.spawn(0).spawn(1) != s.spawn(1).spawn(0)


@pytest.mark.parametrize("kw, key", [
    (dict(kind="uniform-cube", dim=1, side=0.0), "side"),
    (dict(kind="truncated-gaussian", dim=1, scale=-1.0), "scale"),
    (dict(kind="two-component-mixture", dim=1, weights=(0.5, 0.6)), "weights"),
    (dict(kind="cauchy", dim=1), "kind"),
    (dict(kind="uniform-cube", dim=0), "dim"),
])
def test_invalid_distribution_parameters(kw, key):
    with pytest.raises(ConfigError) as exc:
        SamplingDistribution(**kw)
    assert exc.value.key == key


def test_n_must_be_positive():
    with pytest.raises(ConfigError):
        sample_points(SamplingDistribution("uniform-cube", 1), 0, Seed(0))


def test_empirical_weights_sum_to_one():
    for n in (1, 3, 7, 1000):
        mu = EmpiricalMeasure.of(np.zeros((n, 2)))
        assert mu.weights.sum() == pytest.approx(1.0, abs=1e-15)
        assert np.all(mu.weights == mu.weights[0])


def test_pushforward_identical_functions():
    mu = EmpiricalMeasure.of(np.random.default_rng(0).random((5, 2)))
    f = TargetFunction("radial")
    assert np.all(pushforward_residual(f, f, mu).atoms == 0.0)


def test_pushforward_constant_offset():
    mu = EmpiricalMeasure.of([[0.1], [0.7]])
    f = TargetFunction("abs-offset")
    atoms = pushforward_residual(lambda x: f(x) + 0.3, f, mu).atoms[:, 0]
    np.testing.assert_allclose(atoms, [0.3, 0.3], rtol=0, atol=1e-15)


def test_pushforward_hand_example():
    # atoms {0, 1}, g(x) = x, f = 0, p = 2: second moment (0 + 1) / 2
    mu = EmpiricalMeasure.of([[0.0], [1.0]])
    push = pushforward_residual(lambda x: x[:, 0], lambda x: np.zeros(len(x)), mu)
    assert sorted(push.atoms[:, 0]) == [0.0, 1.0]
    assert push.moment(2) == 0.5
    assert discrete_loss(lambda x: x[:, 0], mu.cloud, lambda x: np.zeros(len(x)), 2) == 0.5


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 40), d=st.integers(1, 3), p=st.sampled_from([1.0, 1.5, 2.0, 3.0]),
       a=st.floats(-3, 3), c=st.floats(0, 1), seed=st.integers(0, 2**32))
def test_pushforward_moment_equals_discrete_loss(n, d, p, a, c, seed):
    pts = np.random.default_rng(seed).random((n, d))
    mu = EmpiricalMeasure.of(pts)
    g = TargetFunction("sinusoid", amplitude=a)
    f = TargetFunction("abs-offset", center=c)
    lhs = pushforward_residual(g, f, mu).moment(p)
    rhs = discrete_loss(g, mu.cloud, f, p)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))


def test_point_cloud_immutable():
    cloud = PointCloud(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        cloud.points[0, 0] = 1.0
