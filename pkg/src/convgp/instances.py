"""Random model instances for property tests, gradient checks and benchmarks.

Inducing inputs are laid on a jittered grid over the data range so that
``K_{lambda,lambda}`` stays reasonably conditioned; parameters are drawn
from ranges typical of standardised data.
"""

import itertools

import numpy as np

from .exact import Dataset, NoiseModel
from .kernels import build_kff
from .linalg import jitter_cholesky
from .gradients import ModelParams
from .kernels import (
    PER_POINT,
    SHARED,
    KernelMatrixSpec,
    LatentSpec,
    SmoothingKernel,
    VIKConfig,
    VIKEntry,
)


def _sensitivity(rng):
    return rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 1.5)


def spread_points(rng, K, low, high, p):
    """``K`` points on a jittered grid covering ``[low, high]^p``."""
    per_dim = int(np.ceil(K ** (1.0 / p)))
    axes = [np.linspace(low, high, per_dim + 2)[1:-1] for _ in range(p)]
    grid = np.array(list(itertools.product(*axes)))
    pick = np.sort(rng.choice(len(grid), size=K, replace=False))
    step = (high - low) / (per_dim + 1)
    return grid[pick] + rng.uniform(-0.15, 0.15, size=(K, p)) * step


def random_kernel_spec(rng, D, p, latents=("white", "se"), dirac=False):
    lat = [LatentSpec.white() if k == "white" else LatentSpec.squared_exp(rng.uniform(0.5, 1.5, p))
           for k in latents]
    rows = []
    for _ in range(D):
        row = []
        for q in lat:
            if dirac and not q.is_white:
                row.append(SmoothingKernel.dirac(_sensitivity(rng)))
            else:
                row.append(SmoothingKernel.gaussian(_sensitivity(rng), rng.uniform(0.3, 1.0, p)))
        rows.append(row)
    return KernelMatrixSpec(lat, rows)


def random_slfm_spec(rng, D, latents=("white", "se")):
    lat = [LatentSpec.white() if k == "white" else LatentSpec.squared_exp(rng.uniform(0.5, 1.5))
           for k in latents]
    decays = rng.uniform(0.3, 2.0, D)
    rows = [[SmoothingKernel.causal(_sensitivity(rng), decays[d]) for _ in lat] for d in range(D)]
    return KernelMatrixSpec(lat, rows, rng.normal(size=D))


def random_vik(rng, Z, Q, mode=SHARED):
    p = Z.shape[1]

    def entry():
        return VIKEntry(_sensitivity(rng), rng.uniform(0.3, 0.8, p))

    if mode == PER_POINT:
        return VIKConfig(Z, [[entry() for _ in range(len(Z))] for _ in range(Q)], PER_POINT)
    return VIKConfig(Z, [entry() for _ in range(Q)], SHARED)


def sample_prior(rng, kspec, noise, X, weights=None):
    """Draw noisy targets from the model prior at per-output inputs."""
    K = build_kff(kspec, X)
    sizes = [len(x) for x in X]
    K[np.diag_indices_from(K)] += noise.diag_for(sizes, weights)
    L, _ = jitter_cholesky(K, always=False)
    y = L @ rng.normal(size=K.shape[0])
    offs = np.concatenate([[0], np.cumsum(sizes)])
    return [y[offs[d]:offs[d + 1]] + kspec.mean(d, x) for d, x in enumerate(X)]


def random_instance(rng, D=None, p=None, K=None, latents=("white", "se"), slfm=False,
                    mode=SHARED, sizes=(4, 8), weights=(1.0, 3.0), noise=(0.05, 0.5),
                    targets="prior"):
    """A small random dataset plus model parameters.

    ``targets="prior"`` samples ``y`` from the instance's own model;
    ``"noise"`` uses independent standard normals.  ``weights`` and
    ``noise`` are the ranges of the replicate weights and noise variances
    (``weights=None`` gives unit weights).

    Returns
    -------
    data : Dataset
    params : ModelParams
        With both a VIK configuration (DTCVAR) and plain inducing inputs
        (PITC) at the same locations.
    """
    D = D or int(rng.integers(1, 4))
    p = 1 if slfm else (p or int(rng.integers(1, 3)))
    K = K or int(rng.integers(3, 6))
    if slfm:
        low, high = 0.2, 5.0
        kspec = random_slfm_spec(rng, D, latents)
    else:
        low, high = -2.0, 2.0
        kspec = random_kernel_spec(rng, D, p, latents)
    X = [rng.uniform(low, high, size=(int(rng.integers(sizes[0], sizes[1] + 1)), p))
         for _ in range(D)]
    w = [rng.uniform(*weights, len(x)) if weights else np.ones(len(x)) for x in X]
    noise = NoiseModel(rng.uniform(*noise, D))
    if targets == "prior":
        y = sample_prior(rng, kspec, noise, X, w)
    else:
        y = [rng.normal(size=len(x)) for x in X]
    data = Dataset.from_outputs(X, y, w)
    Z = spread_points(rng, K, low, high, p)
    vik = random_vik(rng, Z, kspec.Q, mode)
    return data, ModelParams(kspec, noise, vik, Z.copy())
