"""Cholesky with jitter escalation and a few triangular-solve helpers."""

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .errors import NotPositiveDefinite

JITTER_START = 1e-6
JITTER_MAX = 1e-2


def jitter_cholesky(K, always=True):
    """Lower Cholesky factor of ``K + c * mean(diag(K)) * I``.

    With ``always`` the factor ``c`` starts at 1e-6; otherwise a plain
    factorisation is tried first (used for matrices that already contain
    observation noise).  ``c`` grows by 10x up to 1e-2.

    Returns
    -------
    L : ndarray
        Lower triangular factor.
    c : float
        Relative jitter actually used.  0.0 when none was needed, or when
        the diagonal is all zero and an absolute jitter had to be used.
    """
    K = np.asarray(K, dtype=float)
    if K.shape[0] == 0:
        return np.zeros((0, 0)), 0.0
    return _factor_with_jitter(K, float(np.mean(np.diag(K))), always)


def _factor_with_jitter(K, scale, always):
    if not np.isfinite(scale):
        raise NotPositiveDefinite("non-finite matrix")
    relative = scale > 0.0
    if not relative:
        scale = 1.0
    factors = [] if always else [0.0]
    c = JITTER_START
    while c <= JITTER_MAX * (1 + 1e-12):
        factors.append(c)
        c *= 10.0
    for c in factors:
        Kj = K.copy()
        Kj[np.diag_indices_from(Kj)] += c * scale
        try:
            L = linalg.cholesky(Kj, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, (c if relative else 0.0)
    raise NotPositiveDefinite(f"Cholesky failed with relative jitter up to {JITTER_MAX:g}")


def chol_solve(L, B):
    return linalg.cho_solve((L, True), B, check_finite=False)


def tri_solve(L, B, trans=False):
    return linalg.solve_triangular(L, B, lower=True, trans="T" if trans else "N",
                                   check_finite=False)


def chol_inverse(L):
    """``(L L^T)^-1`` from a lower Cholesky factor."""
    if L.shape[0] == 0:
        return np.zeros((0, 0))
    Ki, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise NotPositiveDefinite(f"inverse from Cholesky factor failed (info={info})")
    return np.tril(Ki) + np.tril(Ki, -1).T


def chol_logdet(L):
    return 2.0 * np.sum(np.log(np.diag(L)))


def jitter_vjp(G, c):
    """Pull a gradient w.r.t. ``K + c*mean(diag K)*I`` back onto ``K``."""
    G = np.array(G, dtype=float)
    if c:
        n = G.shape[0]
        G[np.diag_indices(n)] += c * np.trace(G) / n
    return G
