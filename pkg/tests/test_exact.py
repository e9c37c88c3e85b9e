import numpy as np
import pytest
from scipy.stats import multivariate_normal

from convgp.errors import DataError, DimensionMismatch
from convgp.exact import (
    Dataset,
    NoiseModel,
    exact_log_marginal,
    exact_predict,
)
from convgp.instances import random_instance, random_kernel_spec
from convgp.kernels import KernelMatrixSpec, LatentSpec, SmoothingKernel, build_kff, build_kff_diag


def dense_oracle(data, params):
    K = build_kff(params.kspec, data.X()) + np.diag(params.noise.diag(data))
    return K


def test_scalar_gaussian_at_zero():
    # one observation, prior variance + noise = 1
    ks = KernelMatrixSpec([LatentSpec.white()], [[SmoothingKernel.gaussian(1.0, [1.0])]])
    prior = build_kff(ks, [np.zeros((1, 1))])[0, 0]
    data = Dataset.from_outputs([np.zeros((1, 1))], [np.zeros(1)])
    v = exact_log_marginal(data, ks, NoiseModel([1.0 - prior]))
    np.testing.assert_allclose(v, -0.5 * np.log(2 * np.pi), rtol=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_matches_dense_density(seed):
    rng = np.random.default_rng(seed)
    data, params = random_instance(rng, sizes=(2, 8))
    K = dense_oracle(data, params)
    want = multivariate_normal(np.zeros(len(K)), K).logpdf(data.y)
    np.testing.assert_allclose(exact_log_marginal(data, params.kspec, params.noise), want,
                               rtol=1e-10)


def test_permutation_invariance(rng):
    data, params = random_instance(rng, D=3)
    base = exact_log_marginal(data, params.kspec, params.noise)
    # shuffle observations within outputs
    perms = [rng.permutation(len(t)) for t in data.targets]
    shuffled = Dataset(data.inputs, [i[p] for i, p in zip(data.indices, perms)],
                       [t[p] for t, p in zip(data.targets, perms)],
                       [w[p] for w, p in zip(data.weights, perms)])
    np.testing.assert_allclose(exact_log_marginal(shuffled, params.kspec, params.noise), base,
                               rtol=1e-10)
    # relabel outputs
    order = [2, 0, 1]
    ks = KernelMatrixSpec(params.kspec.latents, [params.kspec.smoothing[d] for d in order])
    relabelled = Dataset(data.inputs, [data.indices[d] for d in order],
                         [data.targets[d] for d in order], [data.weights[d] for d in order])
    np.testing.assert_allclose(
        exact_log_marginal(relabelled, ks, NoiseModel(params.noise.sigma2[order])), base,
        rtol=1e-10)


def test_interpolates_with_tiny_noise(rng):
    ks = random_kernel_spec(rng, 2, 1, ("se",))
    X = [rng.uniform(-2, 2, (4, 1)) for _ in range(2)]
    y = [rng.normal(size=4) for _ in range(2)]
    data = Dataset.from_outputs(X, y)
    pred = exact_predict(data, ks, NoiseModel([1e-12, 1e-12]), [X[0][:2], X[1][3:]])
    np.testing.assert_allclose(pred.mean, [y[0][0], y[0][1], y[1][3]], atol=1e-4)


def test_zero_sensitivities_give_prior(rng):
    ks = KernelMatrixSpec([LatentSpec.white(), LatentSpec.squared_exp([0.7])],
                          [[SmoothingKernel.gaussian(0.0, [0.5])] * 2] * 2)
    data = Dataset.from_outputs([rng.normal(size=(3, 1))] * 2, [rng.normal(size=3)] * 2)
    noise = NoiseModel([0.2, 0.4])
    Xs = [rng.normal(size=(2, 1)), rng.normal(size=(1, 1))]
    pred = exact_predict(data, ks, noise, Xs, include_noise=True)
    np.testing.assert_array_equal(pred.mean, 0.0)
    np.testing.assert_allclose(pred.cov, np.diag([0.2, 0.2, 0.4]), atol=1e-300)


@pytest.mark.parametrize("seed", range(5))
def test_prediction_matches_dense_inverse(seed):
    rng = np.random.default_rng(seed)
    data, params = random_instance(rng, sizes=(2, 6))
    Xs = [rng.uniform(-2, 2, (3, data.input_dim)) for _ in range(data.D)]
    ks = params.kspec
    K = dense_oracle(data, params)
    Kinv = np.linalg.inv(K)
    Ksf = build_kff(ks, Xs, data.X())
    mean = Ksf @ Kinv @ data.y
    cov = build_kff(ks, Xs) - Ksf @ Kinv @ Ksf.T
    pred = exact_predict(data, ks, params.noise, Xs)
    np.testing.assert_allclose(pred.mean, mean, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(pred.cov, cov, rtol=1e-10, atol=1e-10)
    diag = exact_predict(data, ks, params.noise, Xs, full_cov=False)
    assert diag.diag_only
    np.testing.assert_allclose(diag.var, np.diag(cov), rtol=1e-10, atol=1e-10)


def test_noisy_prediction_adds_weighted_noise(rng):
    data, params = random_instance(rng, D=2)
    Xs = [rng.uniform(-2, 2, (2, data.input_dim)) for _ in range(2)]
    w = [np.array([1.0, 4.0]), np.array([2.0, 2.0])]
    f = exact_predict(data, params.kspec, params.noise, Xs, full_cov=False)
    y = exact_predict(data, params.kspec, params.noise, Xs, full_cov=False, include_noise=True,
                      test_weights=w)
    s = params.noise.sigma2
    np.testing.assert_allclose(y.var - f.var, [s[0], s[0] / 4, s[1] / 2, s[1] / 2], rtol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_posterior_contracts(seed):
    rng = np.random.default_rng(seed)
    data, params = random_instance(rng)
    Xs = [rng.uniform(-2, 2, (4, data.input_dim)) for _ in range(data.D)]
    var = exact_predict(data, params.kspec, params.noise, Xs, full_cov=False).var
    prior = build_kff_diag(params.kspec, Xs)
    assert np.all(var >= -1e-10)
    assert np.all(var <= prior + 1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_extra_observation_never_increases_variance(seed):
    rng = np.random.default_rng(seed)
    data, params = random_instance(rng)
    Xs = [rng.uniform(-2, 2, (4, data.input_dim)) for _ in range(data.D)]
    before = exact_predict(data, params.kspec, params.noise, Xs, full_cov=False).var
    d = int(rng.integers(data.D))
    X = [data.X(j) for j in range(data.D)]
    y = list(data.targets)
    X[d] = np.vstack([X[d], rng.uniform(-2, 2, (1, data.input_dim))])
    y[d] = np.append(y[d], rng.normal())
    bigger = Dataset.from_outputs(X, y, [np.append(w, 1.0) if j == d else w
                                         for j, w in enumerate(data.weights)])
    after = exact_predict(bigger, params.kspec, params.noise, Xs, full_cov=False).var
    assert np.all(after <= before + 1e-8)


def test_unequal_sampling_across_outputs():
    pool = np.linspace(-1, 1, 6)[:, None]
    data = Dataset(pool, [[0, 2, 4], [1, 2]], [[0.1, 0.2, 0.3], [1.0, -1.0]])
    assert data.sizes == [3, 2]
    np.testing.assert_array_equal(data.X(1), pool[[1, 2]])


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 1)), [[0, 5]], [[1.0, 2.0]])
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 1)), [[0, 1]], [[1.0, np.nan]])
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 1)), [[0, 1]], [[1.0, 2.0]], [[1.0, 0.0]])
    with pytest.raises(ValueError):
        NoiseModel([0.0])


def test_guard_and_shape_checks(rng):
    data, params = random_instance(rng, D=2)
    with pytest.raises(DataError):
        exact_log_marginal(data, params.kspec, params.noise, max_obs=3)
    with pytest.raises(DimensionMismatch):
        exact_log_marginal(data, params.kspec, NoiseModel([0.1, 0.1, 0.1]))
