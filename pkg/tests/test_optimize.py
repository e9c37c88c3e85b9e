import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from convgp.data import standardize
from convgp.errors import DegenerateData, NonFiniteObjective
from convgp.exact import Dataset, exact_log_marginal
from convgp.gradients import DTCVAR, EXACT, PITC
from convgp.instances import random_instance
from convgp.kernels import build_kff_diag
from convgp.optimize import (
    GRADIENT,
    MAX_ITERS,
    OBJECTIVE,
    OptimizerConfig,
    choose_inducing,
    fit,
    init_params,
    scg_maximize,
)
from convgp.sparse import dtcvar_bound


def quadratic(target):
    def f(p):
        r = p - target
        return -r @ r, -2.0 * r

    return f


def rosenbrock(p):
    x, y = p
    v = (1 - x) ** 2 + 100 * (y - x * x) ** 2
    g = np.array([-2 * (1 - x) - 400 * x * (y - x * x), 200 * (y - x * x)])
    return -v, -g


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6))
def test_quadratic_reaches_optimum(target):
    target = np.array(target)
    p0 = np.random.default_rng(len(target)).normal(size=target.size) * 3
    p, rep = scg_maximize(quadratic(target), p0, OptimizerConfig(gradient_tol=1e-10))
    np.testing.assert_allclose(p, target, atol=1e-8)
    assert rep.termination in (GRADIENT, OBJECTIVE)


def test_rosenbrock_valley():
    _, rep = scg_maximize(rosenbrock, [-1.2, 1.0], OptimizerConfig(max_iters=2000))
    assert rep.final_objective > -1e-6


def test_trace_is_monotone_and_ends_at_final():
    _, rep = scg_maximize(rosenbrock, [-1.2, 1.0], OptimizerConfig(max_iters=300))
    assert np.all(np.diff(rep.trace) >= 0)
    assert rep.trace[-1] == rep.final_objective
    assert len(rep.trace) == rep.iterations + 1


def test_iteration_cap():
    _, rep = scg_maximize(rosenbrock, [-1.2, 1.0], OptimizerConfig(max_iters=5))
    assert rep.termination == MAX_ITERS and rep.iterations == 5


def test_non_finite_start_raises():
    with pytest.raises(NonFiniteObjective):
        scg_maximize(lambda p: (np.nan, np.zeros(1)), [0.0])


def test_non_finite_trial_points_are_rejected():
    # undefined beyond x = 1; the optimum of -(x-2)^2 restricted to x < 1 is the boundary
    def f(p):
        if p[0] >= 1.0:
            return np.nan, np.full(1, np.nan)
        return -(p[0] - 2.0) ** 2, np.array([-2.0 * (p[0] - 2.0)])

    p, rep = scg_maximize(f, [0.0], OptimizerConfig(max_iters=200))
    assert p[0] < 1.0
    assert np.all(np.diff(rep.trace) >= 0)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(max_iters=0)
    with pytest.raises(ValueError):
        OptimizerConfig(gradient_tol=0.0)


@pytest.mark.parametrize("engine", [DTCVAR, PITC, EXACT])
def test_fit_never_lowers_objective(engine):
    rng = np.random.default_rng(3)
    latents = ("se", "se") if engine == PITC else ("white", "se")
    data, params = random_instance(rng, D=2, latents=latents, sizes=(10, 15), K=4)
    start = init_params(data, params, seed=1)
    fitted, rep = fit(data, start, engine, OptimizerConfig(max_iters=40))
    assert np.all(np.diff(rep.trace) >= 0)
    assert rep.final_objective >= rep.trace[0]
    # positive-constrained values stay positive and finite
    for row in fitted.kspec.smoothing:
        for g in row:
            assert np.all(np.isfinite(g.widths)) and np.all(g.widths > 0)
    assert np.all(fitted.noise.sigma2 > 0)
    if engine == DTCVAR:
        bound = dtcvar_bound(data, fitted.kspec, fitted.noise, fitted.vik).total
        np.testing.assert_allclose(bound, rep.final_objective, rtol=1e-12)
    if engine == EXACT:
        exact = exact_log_marginal(data, fitted.kspec, fitted.noise)
        np.testing.assert_allclose(exact, rep.final_objective, rtol=1e-12)


def test_fit_is_deterministic():
    rng = np.random.default_rng(5)
    data, params = random_instance(rng, D=2, sizes=(8, 10))
    start = init_params(data, params, seed=2)
    cfg = OptimizerConfig(max_iters=25)
    _, a = fit(data, start, DTCVAR, cfg)
    _, b = fit(data, start, DTCVAR, cfg)
    assert a == b


def test_alternating_schedule(rng):
    data, params = random_instance(rng, D=2, sizes=(8, 10))
    start = init_params(data, params, seed=0)
    fitted, rep = fit(data, start, DTCVAR, OptimizerConfig(max_iters=10),
                      schedule="alternating", rounds=2)
    assert np.all(np.diff(rep.trace) >= 0)
    with pytest.raises(ValueError):
        fit(data, start, DTCVAR, schedule="random")


def test_fixed_classes_untouched(rng):
    data, params = random_instance(rng, D=2, sizes=(8, 10))
    start = init_params(data, params, seed=0)
    fitted, _ = fit(data, start, DTCVAR, OptimizerConfig(max_iters=10), fixed=("Z", "log_noise"))
    np.testing.assert_array_equal(fitted.vik.inducing_inputs, start.vik.inducing_inputs)
    np.testing.assert_array_equal(fitted.noise.sigma2, start.noise.sigma2)


# initialisation


def test_standardized_data_gives_tenth_noise(rng):
    data, params = random_instance(rng, D=3, sizes=(6, 10))
    z, _ = standardize(data)
    start = init_params(z, params)
    np.testing.assert_allclose(start.noise.sigma2, 0.1, rtol=1e-12)


def test_init_matches_output_variance(rng):
    data, params = random_instance(rng, D=2, sizes=(6, 10))
    start = init_params(data, params)
    prior = build_kff_diag(start.kspec, [data.X(d) for d in range(2)])
    n0 = data.sizes[0]
    np.testing.assert_allclose(prior[:n0].mean(), 0.9 * np.var(data.targets[0]), rtol=1e-10)
    np.testing.assert_allclose(prior[n0:].mean(), 0.9 * np.var(data.targets[1]), rtol=1e-10)


def test_duplicate_inputs_fall_back_to_unit_width(rng):
    X = np.zeros((4, 1))
    data = Dataset.from_outputs([X, X], [rng.normal(size=4), rng.normal(size=4)])
    _, params = random_instance(rng, D=2, p=1)
    start = init_params(data, params, num_inducing=3)
    assert all(np.all(g.widths == 1.0) for row in start.kspec.smoothing for g in row)
    assert start.vik.K == 3


def test_fixed_seed_fixed_inducing_inputs(rng):
    X = rng.normal(size=(60, 2))
    np.testing.assert_array_equal(choose_inducing(X, 7, seed=4), choose_inducing(X, 7, seed=4))
    assert choose_inducing(X, 7, seed=4).shape == (7, 2)
    # more inducing inputs than distinct points: all points, then jittered copies
    Z = choose_inducing(X[:5], 8, seed=0)
    assert Z.shape == (8, 2)
    np.testing.assert_array_equal(np.unique(X[:5], axis=0), Z[:5])


def test_too_few_observations():
    data = Dataset.from_outputs([np.zeros((3, 1)), np.ones((1, 1))], [np.ones(3), np.ones(1)])
    _, params = random_instance(np.random.default_rng(0), D=2, p=1)
    with pytest.raises(DegenerateData):
        init_params(data, params)


def test_slfm_init_uses_first_observation(rng):
    data, params = random_instance(rng, D=2, slfm=True)
    start = init_params(data, params)
    for d in range(2):
        first = np.argmin(data.X(d)[:, 0])
        assert start.kspec.initial_conditions[d] == data.targets[d][first]
        assert start.kspec.smoothing[d][0].decay == 1.0
