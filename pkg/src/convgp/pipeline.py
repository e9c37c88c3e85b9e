"""End-to-end fitting and prediction behind the command line.

Engines: ``exact``, ``pitc`` and ``dtcvar`` fit one joint model;
``icm-baseline`` is the intrinsic coregionalisation model (Dirac
smoothing of SE latents, exact inference); ``independent-gp`` fits one
exact single-output model per output.
"""

import numpy as np

from .data import Standardizer, standardize
from .errors import ConfigError
from .exact import Dataset, NoiseModel, exact_predict
from .gradients import DTCVAR, EXACT, PITC, ModelParams, engine_value_and_grads
from .kernels import (
    CAUSAL,
    DIRAC,
    GAUSSIAN,
    SE,
    SHARED,
    WHITE,
    KernelMatrixSpec,
    LatentSpec,
    SmoothingKernel,
    VIKConfig,
    VIKEntry,
)
from .optimize import OptimizerConfig, fit, init_params
from .persist import FittedModel
from .sparse import dtcvar_predict, pitc_predict

ICM = "icm-baseline"
INDEPENDENT = "independent-gp"
CLI_ENGINES = (EXACT, PITC, DTCVAR, ICM, INDEPENDENT)


def inference_engine(engine):
    """Engine that evaluates the objective for a command-line engine name."""
    if engine in (ICM, INDEPENDENT):
        return EXACT
    if engine not in CLI_ENGINES:
        raise ConfigError(f"unknown engine {engine!r}; choose from {', '.join(CLI_ENGINES)}")
    return engine


def make_template(D, p, latents=(WHITE, SE), smoothing=GAUSSIAN, engine=DTCVAR,
                  num_inducing=10, vik_mode=SHARED):
    """Placeholder parameters with the requested structure (values are replaced by init)."""
    if engine == ICM:
        smoothing = DIRAC
        if WHITE in latents:
            raise ConfigError("the coregionalisation baseline needs SE latents")
    if engine == PITC and WHITE in latents:
        raise ConfigError("PITC needs smooth latents; use dtcvar for white-noise latents")
    if smoothing == CAUSAL and p != 1:
        raise ConfigError("latent force models take a single time input")
    lat = []
    for k in latents:
        if k == WHITE:
            lat.append(LatentSpec.white())
        elif k == SE:
            lat.append(LatentSpec.squared_exp(np.ones(p)))
        else:
            raise ConfigError(f"unknown latent kind {k!r}")
    if not lat:
        raise ConfigError("need at least one latent")
    if smoothing == GAUSSIAN:
        g = SmoothingKernel.gaussian(1.0, np.ones(p))
    elif smoothing == DIRAC:
        g = SmoothingKernel.dirac(1.0)
    elif smoothing == CAUSAL:
        g = SmoothingKernel.causal(1.0, 1.0)
    else:
        raise ConfigError(f"unknown smoothing form {smoothing!r}")
    kspec = KernelMatrixSpec(lat, [[g] * len(lat) for _ in range(D)])
    out = ModelParams(kspec, NoiseModel(np.ones(D)))
    if engine in (PITC, DTCVAR):
        if num_inducing is None or num_inducing < 1:
            raise ConfigError("sparse engines need a positive number of inducing inputs")
        Z = np.zeros((num_inducing, p))
        out.Z = Z
        if engine == DTCVAR:
            e = VIKEntry(1.0, np.ones(p))
            params = ([e] * len(lat) if vik_mode == SHARED
                      else [[e] * num_inducing for _ in lat])
            out.vik = VIKConfig(Z, params, vik_mode)
    return out


def _output_data(data, d):
    idx = data.indices[d]
    return Dataset(data.inputs[idx], [np.arange(len(idx))], [data.targets[d]], [data.weights[d]])


def fit_dataset(data, engine=DTCVAR, latents=(WHITE, SE), smoothing=GAUSSIAN, num_inducing=10,
                vik_mode=SHARED, cfg=None, seed=0, schedule="joint", rounds=3):
    """Initialise and optimise a model; returns ``(parts, objective)``.

    ``objective`` is the final log likelihood or bound (summed over parts
    for the independent baseline).
    """
    cfg = cfg or OptimizerConfig()
    inner = inference_engine(engine)
    p = data.input_dim
    if engine == INDEPENDENT:
        parts, total = [], 0.0
        for d in range(data.D):
            sub = _output_data(data, d)
            tmpl = make_template(1, p, latents, smoothing, engine)
            params, rep = fit(sub, init_params(sub, tmpl, seed=seed), inner, cfg)
            parts.append(([d], params))
            total += rep.final_objective
        return parts, total
    n_ind = min(num_inducing, data.num_obs) if num_inducing else None
    tmpl = make_template(data.D, p, latents, smoothing, engine, n_ind, vik_mode)
    params, rep = fit(data, init_params(data, tmpl, seed=seed), inner, cfg, schedule=schedule,
                      rounds=rounds)
    return [(list(range(data.D)), params)], rep.final_objective


def fit_model(data, engine=DTCVAR, do_standardize=True, input_names=None, levels=None,
              metrics_standardized=False, unknown_category="error", **kw):
    """Fit and package a :class:`FittedModel` (training data kept for prediction)."""
    if do_standardize:
        work, tr = standardize(data)
    else:
        work, tr = data, Standardizer.identity(data.D)
    parts, obj = fit_dataset(work, engine, **kw)
    names = input_names or [f"x_{j}" for j in range(data.input_dim)]
    return FittedModel(engine, parts, names, tr, levels or {}, unknown_category,
                       metrics_standardized, obj, train=work)


def model_objective(model, data=None):
    """Objective of every part at its stored parameters on (standardised) training data."""
    data = data if data is not None else model.train
    inner = inference_engine(model.engine)
    total = 0.0
    for outs, params in model.parts:
        sub = data if len(model.parts) == 1 else _output_data(data, outs[0])
        value, _ = engine_value_and_grads(inner, sub, params)
        total += value
    return total


def predict_parts(model, X_test, include_noise=False, data=None):
    """Predictive means and variances per output on the standardised scale."""
    data = data if data is not None else model.train
    inner = inference_engine(model.engine)
    D = model.num_outputs
    if len(X_test) != D:
        raise ConfigError(f"expected test inputs for {D} outputs")
    means, vars_ = [None] * D, [None] * D
    for outs, params in model.parts:
        sub = data if len(model.parts) == 1 else _output_data(data, outs[0])
        Xs = [X_test[o] for o in outs]
        kw = dict(include_noise=include_noise, full_cov=False)
        if inner == EXACT:
            pred = exact_predict(sub, params.kspec, params.noise, Xs, **kw)
        elif inner == PITC:
            pred = pitc_predict(sub, params.kspec, params.noise, params.Z, Xs, **kw)
        else:
            pred = dtcvar_predict(sub, params.kspec, params.noise, params.vik, Xs, **kw)
        var = pred.var if pred.var is not None else np.diag(pred.cov)
        offs = np.concatenate([[0], np.cumsum([len(x) for x in Xs])])
        for j, o in enumerate(outs):
            means[o] = pred.mean[offs[j]:offs[j + 1]]
            vars_[o] = var[offs[j]:offs[j + 1]]
    return means, vars_


def predict(model, X_test, include_noise=False, original_scale=True):
    """Predictions per output, de-standardised unless ``original_scale`` is false."""
    means, vars_ = predict_parts(model, X_test, include_noise)
    if not original_scale:
        return means, vars_
    tr = model.standardizer
    return ([tr.inverse(m, d) for d, m in enumerate(means)],
            [tr.inverse_var(v, d) for d, v in enumerate(vars_)])
