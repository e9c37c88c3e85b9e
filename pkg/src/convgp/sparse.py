"""Sparse engines: PITC and the variational DTCVAR bound with inducing kernels.

Both engines work through a ``KQ x KQ`` system.  With ``L`` the Cholesky
factor of the (jittered) inducing covariance and
``V = L^-1 K_{lambda,f} Sigma^-1/2``, the matrix
``A = K_{lambda,lambda} + K_{lambda,f} Sigma^-1 K_{f,lambda}`` equals
``L (I + V V^T) L^T``, so determinants and solves only ever touch the
well-conditioned ``B = I + V V^T``.  Nothing of size ``ND x ND`` is formed
for DTCVAR; PITC forms only the per-output diagonal blocks.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .exact import (
    GaussianPredict,
    _check,
    _test_inputs,
    mean_at,
    noise_at,
    residual_targets,
)
from .kernels import (
    _offsets,
    _require_smooth,
    as_inputs,
    build_kff,
    build_kff_block,
    build_kff_diag,
    build_kflambda,
    build_kfu,
    build_klambda,
    build_kuu,
)
from .linalg import chol_inverse, chol_logdet, chol_solve, jitter_cholesky, tri_solve

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class BoundBreakdown:
    """The two parts of the variational bound and their sum."""

    dtc_term: float
    trace_term: float
    total: float


class InducingState:
    """Cached factorisations of the DTCVAR bound for fixed parameters.

    The state is a snapshot: build a new one whenever a hyperparameter,
    ``Z`` or an inducing-kernel parameter changes.  Reading from it is safe
    from several threads.
    """

    def __init__(self, data, kspec, noise, vik):
        _check(data, kspec, noise)
        self.data, self.kspec, self.noise, self.vik = data, kspec, noise, vik
        self.X = data.X()
        self.y = residual_targets(data, kspec)
        self.s = noise.diag(data)
        self.kff_diag = build_kff_diag(kspec, self.X)
        self.Kfl = build_kflambda(kspec, vik, self.X)
        self.Kll_raw = build_klambda(vik, kspec.latents)
        self.Lll, self.jitter = jitter_cholesky(self.Kll_raw, always=True)
        rs = 1.0 / np.sqrt(self.s)
        # V = L^-1 K_{lambda,f} Sigma^-1/2
        self.V = tri_solve(self.Lll, self.Kfl.T) * rs[None, :]
        n = self.Kll_raw.shape[0]
        self.Kll = self.Lll @ self.Lll.T
        self.LB, _ = jitter_cholesky(np.eye(n) + self.V @ self.V.T, always=False)
        self.c = tri_solve(self.LB, self.V @ (self.y * rs))

    # A^-1 b, the optimal-posterior weight vector
    @property
    def beta(self):
        if not hasattr(self, "_beta"):
            self._beta = tri_solve(self.Lll, tri_solve(self.LB, self.c, trans=True), trans=True)
        return self._beta

    def qff_diag(self):
        """Diagonal of ``K_{f,lambda} K_{lambda,lambda}^-1 K_{lambda,f}``."""
        return self.s * np.sum(self.V * self.V, axis=0)

    def bound(self):
        M = len(self.y)
        logdet = chol_logdet(self.LB) + np.sum(np.log(self.s))
        quad = np.sum(self.y * self.y / self.s) - self.c @ self.c
        dtc = -0.5 * (M * _LOG_2PI + logdet + quad)
        trace = -0.5 * np.sum((self.kff_diag - self.qff_diag()) / self.s)
        return BoundBreakdown(float(dtc), float(trace), float(dtc + trace))

    def inverses(self):
        """``K_{lambda,lambda}^-1`` and ``A^-1`` as dense ``KQ x KQ`` matrices."""
        Li = chol_inverse(self.Lll)
        Linv = tri_solve(self.Lll, np.eye(self.Lll.shape[0]))
        Bi = chol_inverse(self.LB)
        Ai = Linv.T @ Bi @ Linv
        return Li, 0.5 * (Ai + Ai.T)


def dtcvar_state(data, kspec, noise, vik):
    return InducingState(data, kspec, noise, vik)


def dtcvar_bound(data, kspec, noise, vik, state=None):
    """Variational lower bound on the log marginal likelihood, in ``O(NDK^2)``."""
    st = state or InducingState(data, kspec, noise, vik)
    return st.bound()


def _stack_test(kspec, X_test):
    return _test_inputs(kspec, X_test)


def dtcvar_predict(data, kspec, noise, vik, X_test, include_noise=False, full_cov=False,
                   test_weights=None, state=None):
    """Predictive distribution of the DTCVAR approximation at per-output test inputs."""
    st = state or InducingState(data, kspec, noise, vik)
    X_test = _stack_test(kspec, X_test)
    Ksl = build_kflambda(kspec, vik, X_test)
    mean = Ksl @ st.beta + mean_at(kspec, X_test)
    # K*l (Kll^-1 - A^-1) Kl* = |L^-1 Kl*|^2 - |LB^-1 L^-1 Kl*|^2
    W1 = tri_solve(st.Lll, Ksl.T)
    W2 = tri_solve(st.LB, W1)
    if full_cov:
        cov = build_kff(kspec, X_test) - W1.T @ W1 + W2.T @ W2
        if include_noise:
            cov = cov + np.diag(noise_at(noise, X_test, test_weights))
        return GaussianPredict(mean, cov=cov)
    var = build_kff_diag(kspec, X_test) - np.sum(W1 * W1, axis=0) + np.sum(W2 * W2, axis=0)
    if include_noise:
        var = var + noise_at(noise, X_test, test_weights)
    return GaussianPredict(mean, var=var)


def optimal_phi(data, kspec, noise, vik, state=None):
    """Optimal Gaussian variational distribution over the inducing functions.

    Mean ``K_ll A^-1 K_lf Sigma^-1 y`` and covariance ``K_ll A^-1 K_ll``.
    """
    st = state or InducingState(data, kspec, noise, vik)
    mean = st.Kll @ st.beta
    # K_ll A^-1 K_ll = L B^-1 L^T
    R = tri_solve(st.LB, st.Lll.T)
    return GaussianPredict(mean, cov=R.T @ R)


# ---------------------------------------------------------------------------
# PITC


class PITCState:
    """Factorisations behind the PITC likelihood for fixed parameters."""

    def __init__(self, data, kspec, noise, Z):
        _check(data, kspec, noise)
        _require_smooth(kspec)
        self.data, self.kspec, self.noise = data, kspec, noise
        self.Z = as_inputs(Z, kspec.input_dim)
        self.X = data.X()
        self.offsets = _offsets(self.X)
        self.y = residual_targets(data, kspec)
        self.s = noise.diag(data)
        self.Kfu = build_kfu(kspec, self.Z, self.X)
        self.Kuu_raw = build_kuu(kspec.latents, self.Z)
        self.Luu, self.jitter = jitter_cholesky(self.Kuu_raw, always=True)
        n = self.Kuu_raw.shape[0]
        # V = Luu^-1 K_{u,f}; Q_ff = V^T V
        self.V = tri_solve(self.Luu, self.Kfu.T)
        self.Kff_blocks = []
        self.Llam = []
        LiV = np.empty_like(self.V)
        Liy = np.empty_like(self.y)
        logdet = 0.0
        for d, sl in enumerate(self.blocks()):
            Kdd = build_kff_block(kspec, d, self.X[d], d, self.X[d])
            self.Kff_blocks.append(Kdd)
            Vd = self.V[:, sl]
            Lam = Kdd - Vd.T @ Vd + np.diag(self.s[sl])
            Ld, _ = jitter_cholesky(0.5 * (Lam + Lam.T), always=False)
            self.Llam.append(Ld)
            LiV[:, sl] = chol_solve(Ld, Vd.T).T
            Liy[sl] = chol_solve(Ld, self.y[sl])
            logdet += chol_logdet(Ld)
        self.LamInvV = LiV          # (Lambda^-1 V^T)^T
        self.LB, _ = jitter_cholesky(np.eye(n) + self.V @ LiV.T, always=False)
        self.logdet = logdet + chol_logdet(self.LB)
        # alpha = Cov^-1 y by Woodbury
        self.alpha = Liy - LiV.T @ chol_solve(self.LB, self.V @ Liy)

    def blocks(self):
        o = self.offsets
        return [slice(o[d], o[d + 1]) for d in range(len(self.X))]

    def log_marginal(self):
        M = len(self.y)
        return float(-0.5 * (self.y @ self.alpha) - 0.5 * self.logdet - 0.5 * M * _LOG_2PI)

    def cov_inv_apply(self, B):
        """``Cov^-1 B`` for a matrix ``B`` with ``M`` rows."""
        LiB = np.empty_like(B)
        for Ld, sl in zip(self.Llam, self.blocks()):
            LiB[sl] = chol_solve(Ld, B[sl])
        return LiB - self.LamInvV.T @ chol_solve(self.LB, self.V @ LiB)

    def cov_inv_block(self, d):
        """Diagonal block ``d`` of ``Cov^-1``."""
        sl = self.blocks()[d]
        Ld = self.Llam[d]
        Lamd_inv = chol_inverse(Ld)
        Ud = self.LamInvV[:, sl]
        return Lamd_inv - Ud.T @ chol_solve(self.LB, Ud)


def pitc_log_marginal(data, kspec, noise, Z, state=None):
    """Approximate log marginal likelihood: exact output blocks, Nystrom cross blocks."""
    st = state or PITCState(data, kspec, noise, Z)
    return st.log_marginal()


def pitc_predict(data, kspec, noise, Z, X_test, include_noise=False, full_cov=False,
                 test_weights=None, state=None):
    """PITC predictive distribution; the test points form their own block."""
    st = state or PITCState(data, kspec, noise, Z)
    X_test = _stack_test(kspec, X_test)
    Ksu = build_kfu(kspec, st.Z, X_test)
    # Q_*f = Ksu Kuu^-1 Kuf = Vs^T V
    Vs = tri_solve(st.Luu, Ksu.T)
    mean = Vs.T @ (st.V @ st.alpha) + mean_at(kspec, X_test)
    R = st.V @ st.cov_inv_apply(st.V.T)
    R = 0.5 * (R + R.T)
    if full_cov:
        cov = build_kff(kspec, X_test) - Vs.T @ R @ Vs
        if include_noise:
            cov = cov + np.diag(noise_at(noise, X_test, test_weights))
        return GaussianPredict(mean, cov=cov)
    var = build_kff_diag(kspec, X_test) - np.sum(Vs * (R @ Vs), axis=0)
    if include_noise:
        var = var + noise_at(noise, X_test, test_weights)
    return GaussianPredict(mean, var=var)


def pitc_effective_cov(data, kspec, noise, Z):
    """Dense PITC prior covariance ``D + K_fu K_uu^-1 K_uf`` (small problems only)."""
    st = PITCState(data, kspec, noise, Z)
    C = st.V.T @ st.V
    for Kdd, sl in zip(st.Kff_blocks, st.blocks()):
        C[sl, sl] = Kdd
    if C.shape[0] != data.num_obs:
        raise DimensionMismatch("unexpected covariance size")
    return C
