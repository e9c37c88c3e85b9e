"""Exact multi-output GP: data containers, log marginal likelihood, prediction.

This is the cubic-cost reference engine; the sparse engines are tested
against it.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionMismatch
from .kernels import as_inputs, build_kff, build_kff_diag
from .linalg import chol_logdet, chol_solve, jitter_cholesky, tri_solve

MAX_EXACT_OBS = 4000
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(eq=False)
class Dataset:
    """Observations of ``D`` outputs drawn from a shared pool of inputs.

    ``indices[d]`` selects the pool rows observed for output ``d``; outputs
    may observe different subsets.  ``weights`` scale the noise precision
    (a mean of ``w`` replicates has variance ``sigma2 / w``).
    """

    inputs: np.ndarray
    indices: list
    targets: list
    weights: list = None

    def __post_init__(self):
        self.inputs = as_inputs(self.inputs)
        P = self.inputs.shape[0]
        self.indices = [np.asarray(i, dtype=int).reshape(-1) for i in self.indices]
        self.targets = [np.asarray(y, dtype=float).reshape(-1) for y in self.targets]
        if self.weights is None:
            self.weights = [np.ones(len(i)) for i in self.indices]
        self.weights = [np.asarray(w, dtype=float).reshape(-1) for w in self.weights]
        if not (len(self.indices) == len(self.targets) == len(self.weights)):
            raise DimensionMismatch("indices, targets and weights disagree on D")
        for idx, y, w in zip(self.indices, self.targets, self.weights):
            if not (len(idx) == len(y) == len(w)):
                raise DimensionMismatch("per-output arrays have different lengths")
            if len(idx) and (idx.min() < 0 or idx.max() >= P):
                raise DataError("observation index outside the input pool")
            if not np.all(np.isfinite(y)):
                raise DataError("targets must be finite")
            if np.any(w <= 0) or not np.all(np.isfinite(w)):
                raise DataError("weights must be positive")

    @classmethod
    def from_outputs(cls, X, y, weights=None):
        """Build from per-output input arrays (the pool is their concatenation)."""
        X = [as_inputs(x) for x in X]
        sizes = [x.shape[0] for x in X]
        offs = np.concatenate([[0], np.cumsum(sizes)])
        idx = [np.arange(offs[d], offs[d + 1]) for d in range(len(X))]
        return cls(np.vstack(X), idx, list(y), weights)

    @property
    def D(self):
        return len(self.indices)

    @property
    def input_dim(self):
        return self.inputs.shape[1]

    @property
    def sizes(self):
        return [len(i) for i in self.indices]

    @property
    def num_obs(self):
        return int(sum(self.sizes))

    def X(self, d=None):
        if d is None:
            return [self.inputs[i] for i in self.indices]
        return self.inputs[self.indices[d]]

    @property
    def y(self):
        return np.concatenate(self.targets)

    @property
    def w(self):
        return np.concatenate(self.weights)

    def output_ids(self):
        return np.concatenate([np.full(n, d) for d, n in enumerate(self.sizes)])

    def subset(self, masks):
        """Keep observations where ``masks[d]`` is true."""
        masks = [np.asarray(m, dtype=bool) for m in masks]
        return Dataset(self.inputs,
                       [i[m] for i, m in zip(self.indices, masks)],
                       [y[m] for y, m in zip(self.targets, masks)],
                       [w[m] for w, m in zip(self.weights, masks)])


@dataclass(eq=False)
class NoiseModel:
    """Per-output noise variances; observation ``(d, n)`` has ``sigma2[d] / w_dn``."""

    sigma2: np.ndarray

    def __post_init__(self):
        self.sigma2 = np.atleast_1d(np.asarray(self.sigma2, dtype=float))
        if np.any(self.sigma2 <= 0) or not np.all(np.isfinite(self.sigma2)):
            raise ValueError("noise variances must be positive")

    def diag(self, data):
        return np.concatenate([self.sigma2[d] / w for d, w in enumerate(data.weights)])

    def diag_for(self, sizes, weights=None):
        if weights is None:
            return np.concatenate([np.full(n, self.sigma2[d]) for d, n in enumerate(sizes)])
        return np.concatenate([self.sigma2[d] / w for d, w in enumerate(weights)])


@dataclass(eq=False)
class GaussianPredict:
    """Predictive mean with either a full covariance or just its diagonal."""

    mean: np.ndarray
    cov: np.ndarray = None
    var: np.ndarray = None

    def __post_init__(self):
        if self.var is None and self.cov is not None:
            self.var = np.diag(self.cov).copy()

    @property
    def diag_only(self):
        return self.cov is None


def _check(data, kspec, noise):
    if data.D != kspec.D or len(noise.sigma2) != kspec.D:
        raise DimensionMismatch("dataset, kernel and noise disagree on the number of outputs")


def residual_targets(data, kspec):
    """Targets minus the prior mean (non-zero only for causal kernels)."""
    return np.concatenate([y - kspec.mean(d, x)
                           for d, (y, x) in enumerate(zip(data.targets, data.X()))])


class ExactState:
    """Factorised ``K_ff + Sigma`` for one setting of the hyperparameters."""

    def __init__(self, data, kspec, noise, max_obs=MAX_EXACT_OBS):
        _check(data, kspec, noise)
        if data.num_obs > max_obs:
            raise DataError(f"exact engine limited to {max_obs} observations "
                             f"(got {data.num_obs}); use a sparse engine")
        self.data, self.kspec, self.noise = data, kspec, noise
        self.X = data.X()
        self.y = residual_targets(data, kspec)
        self.s = noise.diag(data)
        self.Kff = build_kff(kspec, self.X)
        self.L, _ = jitter_cholesky(self.Kff + np.diag(self.s), always=False)
        self.alpha = chol_solve(self.L, self.y)

    def log_marginal(self):
        M = len(self.y)
        return float(-0.5 * (self.y @ self.alpha) - 0.5 * chol_logdet(self.L) - 0.5 * M * _LOG_2PI)


def exact_log_marginal(data, kspec, noise, max_obs=MAX_EXACT_OBS):
    """``log N(y | m, K_ff + Sigma)`` via Cholesky."""
    return ExactState(data, kspec, noise, max_obs).log_marginal()


def _test_inputs(kspec, X_test):
    if len(X_test) != kspec.D:
        raise DimensionMismatch("need test inputs for every output (possibly empty)")
    return [as_inputs(x, kspec.input_dim) if np.size(x) else np.zeros((0, kspec.input_dim or 1))
            for x in X_test]


def noise_at(noise, X_test, test_weights=None):
    sizes = [x.shape[0] for x in X_test]
    return noise.diag_for(sizes, test_weights)


def mean_at(kspec, X_test):
    return np.concatenate([kspec.mean(d, x) for d, x in enumerate(X_test)])


def exact_predict(data, kspec, noise, X_test, include_noise=False, full_cov=True,
                  test_weights=None, state=None):
    """Posterior of ``f*`` (or ``y*`` with ``include_noise``) at per-output test inputs."""
    X_test = _test_inputs(kspec, X_test)
    st = state or ExactState(data, kspec, noise)
    Ksf = build_kff(kspec, X_test, st.X)
    mean = Ksf @ st.alpha + mean_at(kspec, X_test)
    V = tri_solve(st.L, Ksf.T)
    if full_cov:
        cov = build_kff(kspec, X_test) - V.T @ V
        if include_noise:
            cov = cov + np.diag(noise_at(noise, X_test, test_weights))
        return GaussianPredict(mean, cov=cov)
    var = build_kff_diag(kspec, X_test) - np.sum(V * V, axis=0)
    if include_noise:
        var = var + noise_at(noise, X_test, test_weights)
    return GaussianPredict(mean, var=var)
