"""Stochastic latent force model: first-order ODE outputs driven by latent forces.

Output ``d`` solves ``df/dt + D_d f = sum_q S_dq u_q(t)`` from ``f(0) = f_d0``,
so that ``f_d(t) = exp(-D_d t) f_d0 + sum_q S_dq int_0^t exp(-D_d (t - z)) u_q(z) dz``.
Forces are smooth (normalised SE) or unit white noise.  The covariance
forms here are thin wrappers over :mod:`convgp._causal`; the model plugs
into every engine through :meth:`SLFMSpec.to_kernel_spec`.
"""

from dataclasses import dataclass

import numpy as np

from . import _causal
from .errors import DimensionMismatch, NegativeTime, WhiteNoiseNotSupported
from .kernels import KernelMatrixSpec, LatentSpec, SmoothingKernel, vik_cov


def _times(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise NegativeTime("the model starts at t = 0")
    return t


@dataclass(eq=False)
class SLFMSpec:
    """Decays, initial conditions and sensitivities of a latent force model.

    Parameters
    ----------
    decays : array_like, shape (D,)
        Positive decay rates ``D_d``.
    initial_conditions : array_like, shape (D,)
        Values ``f_d(0)``.
    sensitivities : array_like, shape (D, Q)
        ``S_dq``; columns follow ``lengthscales`` then the white forces.
    lengthscales : sequence of float
        One entry per smooth force (``Q_s`` of them).
    num_white : int
        Number of white-noise forces ``Q_o``.
    """

    decays: np.ndarray
    initial_conditions: np.ndarray
    sensitivities: np.ndarray
    lengthscales: tuple = ()
    num_white: int = 0

    def __post_init__(self):
        self.decays = np.atleast_1d(np.asarray(self.decays, dtype=float))
        D = len(self.decays)
        if np.any(self.decays <= 0) or not np.all(np.isfinite(self.decays)):
            raise ValueError("decays must be positive")
        self.initial_conditions = np.asarray(self.initial_conditions, dtype=float).reshape(D)
        self.lengthscales = tuple(float(l) for l in self.lengthscales)
        if any(l <= 0 for l in self.lengthscales):
            raise ValueError("lengthscales must be positive")
        self.num_white = int(self.num_white)
        if self.num_white < 0 or self.Q < 1:
            raise ValueError("need at least one force")
        self.sensitivities = np.asarray(self.sensitivities, dtype=float).reshape(D, -1)
        if self.sensitivities.shape != (D, self.Q):
            raise DimensionMismatch(f"sensitivities must be {D} x {self.Q}")

    @property
    def D(self):
        return len(self.decays)

    @property
    def Q(self):
        return len(self.lengthscales) + self.num_white

    def latents(self):
        return ([LatentSpec.squared_exp([l]) for l in self.lengthscales]
                + [LatentSpec.white() for _ in range(self.num_white)])

    def to_kernel_spec(self):
        rows = [[SmoothingKernel.causal(self.sensitivities[d, q], self.decays[d])
                 for q in range(self.Q)] for d in range(self.D)]
        return KernelMatrixSpec(self.latents(), rows, self.initial_conditions.copy())

    @classmethod
    def from_kernel_spec(cls, kspec):
        lat = kspec.latents
        smooth = [q for q, l in enumerate(lat) if not l.is_white]
        white = [q for q, l in enumerate(lat) if l.is_white]
        if smooth + white != list(range(len(lat))):
            raise ValueError("smooth forces must precede white ones")
        S = np.array([[g.sensitivity for g in row] for row in kspec.smoothing])
        return cls([row[0].decay for row in kspec.smoothing], kspec.initial_conditions, S,
                   [float(lat[q].lengthscale[0]) for q in smooth], len(white))


def slfm_mean(spec, d, t):
    """Decay of the initial condition, ``exp(-D_d t) f_d0``."""
    t = _times(t)
    return np.exp(-spec.decays[d] * t) * spec.initial_conditions[d]


def _force_cov(spec, q, d, d2, t, t2):
    D1, D2 = spec.decays[d], spec.decays[d2]
    if q < len(spec.lengthscales):
        return _causal.se_cov(t, t2, D1, D2, spec.lengthscales[q])
    return _causal.white_cov(t, t2, D1, D2)


def slfm_cov(spec, d, d2, t, t2):
    """``Cov[f_d(t), f_d2(t2)]`` summed over forces."""
    t, t2 = _times(t), _times(t2)
    S = spec.sensitivities
    out = sum(S[d, q] * S[d2, q] * _force_cov(spec, q, d, d2, t, t2) for q in range(spec.Q))
    return out[()] if np.ndim(out) == 0 else out


def slfm_vik_cross_cov(spec, d, q, vik, t, z):
    """``Cov[f_d(t), lambda_q(z)]`` for a Gaussian inducing kernel ``vik`` on force ``q``."""
    t = _times(t)
    tau2 = vik.widths[0] ** 2
    if q < len(spec.lengthscales):
        tau2 = tau2 + spec.lengthscales[q] ** 2
    out = spec.sensitivities[d, q] * vik.sensitivity * _causal.causal_gauss(t, z, spec.decays[d], tau2)
    return out[()] if np.ndim(out) == 0 else out


def slfm_vik_cov(vik1, vik2, force, z, z2):
    """``Cov[lambda(z), lambda(z2)]`` between inducing functions of one force."""
    return vik_cov(vik1, vik2, force, z, z2)


def slfm_latent_cross_cov(spec, d, q, t, z):
    """``Cov[f_d(t), u_q(z)]`` for a smooth force (plain inducing variables)."""
    t = _times(t)
    if q >= len(spec.lengthscales):
        raise WhiteNoiseNotSupported("white forces have no pointwise covariance")
    out = spec.sensitivities[d, q] * _causal.causal_gauss(t, z, spec.decays[d],
                                                          spec.lengthscales[q] ** 2)
    return out[()] if np.ndim(out) == 0 else out
