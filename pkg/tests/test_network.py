import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import abs_offset_network, fd_output_gradient, loop_forward, relative_error
from wasscert.errors import ConfigError, DimensionMismatch, PowerIterationError
from wasscert.measures import SamplingDistribution, Seed
from wasscert.network import (MlpParams, MlpSpec, empirical_lipschitz, forward_backward, lipschitz_bracket,
                              lipschitz_lower_empirical, lipschitz_upper, load_params, mlp_forward,
                              param_count, project_spectral, save_params, spectral_norm)
from wasscert.training import TargetFunction

UNIT = SamplingDistribution("uniform-cube", 1)


def _net(dims, act, seed):
    return MlpParams.init(MlpSpec(dims, act), np.random.default_rng(seed))


@pytest.mark.parametrize("dims, count", [((2, 8, 1), 33), ((1, 1, 1), 4), ((5, 1), 6), ((3, 4, 4, 1), 41)])
def test_param_count(dims, count):
    spec = MlpSpec(dims)
    assert param_count(spec) == count
    assert MlpParams.zeros(spec).flat().size == count


@pytest.mark.parametrize("dims", [(1,), (2, 0, 1), (2, 3, 2)])
def test_invalid_spec(dims):
    with pytest.raises(ConfigError):
        MlpSpec(dims)


def test_invalid_activation():
    with pytest.raises(ConfigError):
        MlpSpec((1, 1), "sigmoid")


def test_zero_network_outputs_zero(rng):
    p = MlpParams.zeros(MlpSpec((3, 5, 5, 1)))
    assert np.all(mlp_forward(p, rng.random((10, 3))) == 0.0)


def test_relu_identity_on_positive_half_line():
    p = MlpParams(MlpSpec((1, 1, 1)), [np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
    x = np.array([-2.0, -0.5, 0.0, 0.5, 3.0])
    np.testing.assert_array_equal(mlp_forward(p, x), [0.0, 0.0, 0.0, 0.5, 3.0])


def test_dimension_mismatch_rejected():
    p = MlpParams.zeros(MlpSpec((2, 3, 1)))
    with pytest.raises(DimensionMismatch):
        mlp_forward(p, np.zeros((4, 3)))


@pytest.mark.parametrize("act", ["relu", "tanh"])
def test_vectorised_forward_matches_loop(act, rng):
    p = _net((3, 6, 4, 1), act, 1)
    x = rng.random((8, 3))
    out = mlp_forward(p, x)
    for i in range(8):
        assert out[i] == pytest.approx(loop_forward(p, x[i]), abs=1e-13)


@settings(max_examples=50, deadline=None)
@given(lam=st.floats(-10, 10), seed=st.integers(0, 2**32))
def test_output_homogeneous_in_last_layer(lam, seed):
    p = _net((2, 5, 3, 1), "tanh", seed)
    x = np.random.default_rng(seed).random((6, 2))
    q = p.copy()
    q.weights[-1] = lam * q.weights[-1]
    np.testing.assert_allclose(mlp_forward(q, x), lam * mlp_forward(p, x), rtol=0, atol=1e-12 * max(1, abs(lam)))


@pytest.mark.parametrize("act", ["relu", "tanh"])
def test_backprop_matches_finite_differences(act):
    rng = np.random.default_rng(99)
    for _ in range(20):
        d = int(rng.integers(1, 4))
        p = _net((d, int(rng.integers(1, 7)), int(rng.integers(1, 7)), 1), act, int(rng.integers(2**31)))
        x = rng.random((1, d))
        _, gw, gb = forward_backward(p, x, np.ones(1))
        bp = np.concatenate([a for w, b in zip(gw, gb) for a in (w.ravel(), b)])
        assert relative_error(bp, fd_output_gradient(p, x)) <= 1e-6


def test_flat_round_trip(rng):
    p = _net((2, 4, 1), "relu", 3)
    q = MlpParams.from_flat(p.spec, p.flat())
    assert np.array_equal(q.flat(), p.flat())
    with pytest.raises(ValueError):
        MlpParams.from_flat(p.spec, np.zeros(3))


def test_spectral_norm_matches_svd(rng):
    for shape in [(1, 1), (1, 5), (5, 1), (4, 4), (8, 3), (16, 16)]:
        w = rng.normal(size=shape)
        assert spectral_norm(w) == pytest.approx(np.linalg.svd(w, compute_uv=False)[0], rel=1e-7)
    assert spectral_norm(np.zeros((3, 3))) == 0.0


def test_spectral_norm_cap_raises_with_best():
    # two nearly equal singular values make power iteration crawl
    w = np.diag([1.0, 1.0 - 1e-9, 0.5])
    w = w @ np.linalg.qr(np.random.default_rng(0).normal(size=(3, 3)))[0]
    with pytest.raises(PowerIterationError) as exc:
        spectral_norm(w, tol=1e-16, max_iter=5)
    assert exc.value.best > 0


def test_lipschitz_examples():
    single = MlpParams(MlpSpec((1, 1)), [np.array([[3.0]])], [np.zeros(1)])
    assert lipschitz_upper(single) == 3.0
    assert lipschitz_lower_empirical(single, UNIT, 50, Seed(1)) == pytest.approx(3.0, rel=1e-12)
    two = MlpParams(MlpSpec((1, 1, 1)), [np.array([[2.0]]), np.array([[5.0]])], [np.zeros(1), np.zeros(1)])
    assert lipschitz_upper(two) == 10.0
    assert lipschitz_lower_empirical(MlpParams.zeros(MlpSpec((2, 3, 1))),
                                     SamplingDistribution("uniform-cube", 2), 100, Seed(0)) == 0.0


def test_lipschitz_bracket_random_nets():
    for s in range(10):
        p = _net((2, 8, 8, 1), "relu", s)
        est = lipschitz_bracket(p, SamplingDistribution("uniform-cube", 2), 10_000, Seed(s))
        assert 0 <= est.lower <= est.upper
        assert est.pair_count == 10_000


def test_residual_lipschitz_sum_rule():
    f = TargetFunction("sinusoid", amplitude=0.3)
    for s in range(5):
        p = _net((1, 8, 1), "relu", s)
        upper = lipschitz_upper(p) + f.lipschitz(1)
        lower = empirical_lipschitz(lambda x: p(x) - f(x), UNIT, 10_000, Seed(s))
        assert lower <= upper


def test_project_spectral_caps_every_layer(rng):
    p = _net((3, 10, 10, 1), "relu", 0)
    for w in p.weights:
        w *= 5
    assert project_spectral(p, 1.5)
    assert all(spectral_norm(w) <= 1.5 * (1 + 1e-7) for w in p.weights)
    assert not project_spectral(p, 100.0)


def test_model_file_round_trip(tmp_path):
    p = _net((2, 5, 3, 1), "tanh", 4)
    path = tmp_path / "m.bin"
    save_params(p, path)
    q = load_params(path)
    assert q.spec == p.spec
    assert q.flat().tobytes() == p.flat().tobytes()
    save_params(q, tmp_path / "m2.bin")
    assert path.read_bytes() == (tmp_path / "m2.bin").read_bytes()


def test_model_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"not a model")
    with pytest.raises(ValueError):
        load_params(path)


def test_exact_abs_offset_representation():
    p = abs_offset_network(64)
    x = np.linspace(-1, 2, 31)
    np.testing.assert_allclose(p(x), np.abs(x - 0.5), atol=1e-15)
    assert lipschitz_upper(p) == pytest.approx(2.0)
