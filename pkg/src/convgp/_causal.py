"""Closed forms for causal exponential smoothing kernels.

The smoothing kernel is ``G(t - z) = exp(-D (t - z))`` on ``0 <= z <= t``.
All functions broadcast over their array arguments and optionally return
partial derivatives keyed by argument name.  Terms of the form
``exp(E) * (Phi(x) - Phi(y))`` are evaluated in log space so that large
``D * t`` products neither overflow nor cancel.
"""

import numpy as np
from scipy.special import log_ndtr

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _log_phi(x):
    return -0.5 * x * x - _LOG_SQRT_2PI


def log_ndtr_diff(x, y):
    """``log(Phi(x) - Phi(y))`` for ``x >= y``, accurate in both tails."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    upper = y > 0
    # in the upper tail use Phi(x) - Phi(y) = Phi(-y) - Phi(-x)
    hi = np.where(upper, -y, x)
    lo = np.where(upper, -x, y)
    log_hi = log_ndtr(hi)
    log_lo = log_ndtr(lo)
    with np.errstate(divide="ignore"):
        return log_hi + np.log(-np.expm1(log_lo - log_hi))


def _exp_diff(E, x, y, dE=None, dx=None, dy=None):
    """Value and derivatives of ``exp(E) * (Phi(x) - Phi(y))``."""
    val = np.exp(E + log_ndtr_diff(x, y))
    if dE is None:
        return val, None
    px = np.exp(E + _log_phi(x))
    py = np.exp(E + _log_phi(y))
    grads = {}
    for key in dE:
        grads[key] = val * dE[key] + px * dx.get(key, 0.0) - py * dy.get(key, 0.0)
    return val, grads


def white_cov(t1, t2, D1, D2, grad=False):
    """Covariance of two causal outputs driven by the same unit white noise.

    ``int_0^min(t1,t2) exp(-D1 (t1 - z)) exp(-D2 (t2 - z)) dz``.
    """
    t1, t2, D1, D2 = np.broadcast_arrays(*(np.asarray(a, float) for a in (t1, t2, D1, D2)))
    s = D1 + D2
    m = np.minimum(t1, t2)
    u = np.exp(-D1 * (t1 - m) - D2 * (t2 - m))
    e = np.exp(-s * m)
    val = u * (-np.expm1(-s * m)) / s
    if not grad:
        return val
    common = u * m * e / s - val / s
    return val, {"D1": -(t1 - m) * val + common, "D2": -(t2 - m) * val + common}


def se_cov(t1, t2, D1, D2, ell, grad=False):
    """Causal outputs driven by a normalised squared-exponential force.

    ``int_0^t1 int_0^t2 exp(-D1 (t1 - z)) exp(-D2 (t2 - z')) N(z - z' | 0, ell^2)``.
    """
    t, tp, D, Dp, l = np.broadcast_arrays(*(np.asarray(a, float) for a in (t1, t2, D1, D2, ell)))
    s = D + Dp
    l2 = l * l
    c = Dp * l2
    a1 = tp - c
    a2 = -c
    P0 = -D * t - Dp * tp + 0.5 * Dp * Dp * l2
    dP0 = {"D1": -t, "D2": -tp + Dp * l2, "ell": Dp * Dp * l}
    zero = np.zeros_like(t)

    terms = []
    # boundary terms of the integration by parts
    E = P0 + s * t
    terms.append((1.0, E, {"D1": zero, "D2": dP0["D2"] + t, "ell": dP0["ell"]},
                  (a1 - t) / l, {"D2": -l, "ell": -2.0 * Dp - (a1 - t) / l2},
                  (a2 - t) / l, {"D2": -l, "ell": -2.0 * Dp - (a2 - t) / l2}))
    terms.append((-1.0, P0, dP0,
                  a1 / l, {"D2": -l, "ell": -2.0 * Dp - a1 / l2},
                  a2 / l, {"D2": -l, "ell": -2.0 * Dp - a2 / l2}))
    # completed-square terms, one per integration limit of the inner integral
    for sign, a in ((1.0, a1), (-1.0, a2)):
        E = P0 + s * a + 0.5 * s * s * l2
        dE = {"D1": -t + a + s * l2,
              "D2": -tp + Dp * l2 + a,
              "ell": Dp * Dp * l - 2.0 * s * Dp * l + s * s * l}
        x = (t - a) / l - s * l
        y = -a / l - s * l
        dx = {"D1": -l, "ell": 2.0 * Dp - (t - a) / l2 - s}
        dy = {"D1": -l, "ell": 2.0 * Dp + a / l2 - s}
        terms.append((sign, E, dE, x, dx, y, dy))

    total = 0.0
    gsum = {"D1": 0.0, "D2": 0.0, "ell": 0.0}
    for sign, E, dE, x, dx, y, dy in terms:
        if grad:
            v, g = _exp_diff(E, x, y, dE, dx, dy)
            for key in gsum:
                gsum[key] = gsum[key] + sign * g[key]
        else:
            v, _ = _exp_diff(E, x, y)
        total = total + sign * v
    val = total / s
    if not grad:
        return val
    return val, {"D1": gsum["D1"] / s - val / s,
                 "D2": gsum["D2"] / s - val / s,
                 "ell": gsum["ell"] / s}


def causal_gauss(t, z, D, tau2, grad=False):
    """``int_0^t exp(-D (t - v)) N(z - v | 0, tau2) dv``.

    Covers the output / inducing-function cross covariance (``tau2`` is the
    inducing-kernel variance, plus the latent variance for smooth forces)
    and the output / latent cross covariance for smooth forces.
    """
    t, z, D, tau2 = np.broadcast_arrays(*(np.asarray(a, float) for a in (t, z, D, tau2)))
    tau = np.sqrt(tau2)
    E = -D * (t - z) + 0.5 * D * D * tau2
    x = (t - z - D * tau2) / tau
    y = (-z - D * tau2) / tau
    if not grad:
        return _exp_diff(E, x, y)[0]
    tau3 = tau2 * tau
    dE = {"D": -(t - z) + D * tau2, "tau2": 0.5 * D * D, "z": D}
    dx = {"D": -tau, "tau2": -(t - z) / (2.0 * tau3) - D / (2.0 * tau), "z": -1.0 / tau}
    dy = {"D": -tau, "tau2": z / (2.0 * tau3) - D / (2.0 * tau), "z": -1.0 / tau}
    return _exp_diff(E, x, y, dE, dx, dy)
