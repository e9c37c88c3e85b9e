"""Numerical-quadrature oracles for every closed-form covariance.

Each oracle writes the covariance as the convolution integral that defines
it and integrates numerically with :func:`scipy.integrate.quad` (nested
for double integrals).  No closed-form identity is used.  Gaussian
products over several input dimensions factorise, so multi-dimensional
integrals are evaluated as products of one-dimensional ones.  Gaussian
tails are truncated at 10 combined standard deviations beyond the extreme
centres of the integrand.
"""

import math
import warnings
import zlib

import numpy as np
from scipy import integrate

from . import slfm
from .errors import FormMismatch, NoConvergence, WhiteNoiseNotSupported
from .kernels import (
    GAUSSIAN,
    LatentSpec,
    SmoothingKernel,
    VIKEntry,
    output_cross_cov,
    output_latent_cross_cov,
    output_vik_cross_cov,
    vik_cov,
)

TAIL = 10.0


def _npdf(r, var):
    return math.exp(-0.5 * r * r / var) / math.sqrt(2.0 * math.pi * var)


def _quad(f, a, b, points, tol, rtol, limit):
    if b <= a:
        return 0.0, 0.0
    pts = None
    if points is not None:
        pts = sorted({float(p) for p in points if a < p < b}) or None
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, points=pts, epsabs=tol, epsrel=rtol, limit=limit)
        except integrate.IntegrationWarning as exc:
            raise NoConvergence(str(exc).splitlines()[0]) from None
    if not np.isfinite(val) or err > max(tol, rtol * abs(val)):
        raise NoConvergence(f"error estimate {err:.3g} above tolerance")
    return val, err


def quadrature_oracle(f, domain, tol=1e-13, rtol=1e-10, points=None, limit=400):
    """Adaptive quadrature over an interval or a rectangle.

    Parameters
    ----------
    f : callable
        ``f(x)`` for one-dimensional domains, ``f(x, y)`` for rectangles.
    domain : tuple
        ``(a, b)``, or ``((a, b), (c, d))`` where the inner limits ``c`` and
        ``d`` may be callables of ``x``.
    tol, rtol : float
        Absolute and relative error targets.
    points : sequence or tuple of sequences, optional
        Break points where the integrand is sharply peaked.  For rectangles
        pass ``(outer_points, inner_points)``; ``inner_points`` may be a
        callable of ``x``.

    Raises
    ------
    NoConvergence
        When the subdivision limit is reached before the error target.
    """
    if np.ndim(domain[0]) == 0 and not callable(domain[0]):
        a, b = domain
        return _quad(f, a, b, points, tol, rtol, limit)[0]
    (a, b), (c, d) = domain
    outer_pts, inner_pts = points if points is not None else (None, None)

    def inner(x):
        lo = c(x) if callable(c) else c
        hi = d(x) if callable(d) else d
        pts = inner_pts(x) if callable(inner_pts) else inner_pts
        return _quad(lambda y: f(x, y), lo, hi, pts, tol, rtol, limit)[0]

    return _quad(inner, a, b, outer_pts, tol, rtol, limit)[0]


def _range(centers, var):
    s = TAIL * np.sqrt(var)
    return min(centers) - s, max(centers) + s


def _gauss_conv(c1, v1, c2, v2, vk=None):
    """``int N(c1 - z | v1) N(c2 - z | v2) dz`` or, with ``vk``, the double integral
    ``int int N(c1 - z | v1) N(z - z' | vk) N(c2 - z' | v2) dz dz'``."""
    if vk is None:
        lo, hi = _range([c1, c2], v1 + v2)
        return quadrature_oracle(lambda z: _npdf(c1 - z, v1) * _npdf(c2 - z, v2), (lo, hi),
                                 points=[c1, c2])
    tot = v1 + v2 + vk
    lo1, hi1 = _range([c1, c2], tot)
    lo2, hi2 = _range([c1, c2], tot)
    return quadrature_oracle(
        lambda z, zp: _npdf(c1 - z, v1) * _npdf(z - zp, vk) * _npdf(c2 - zp, v2),
        ((lo1, hi1), (lo2, hi2)),
        points=([c1, c2], lambda z: [z, c2]))


def _per_dim(x, x2, v1, v2, vk):
    x, x2 = np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(x2, float))
    v1 = np.broadcast_to(v1, x.shape)
    v2 = np.broadcast_to(v2, x.shape)
    out = 1.0
    for j in range(x.size):
        out *= _gauss_conv(x[j], v1[j], x2[j], v2[j], None if vk is None else vk[j])
    return out


def _latent_var(spec, n):
    return None if spec.is_white else np.broadcast_to(spec.lengthscale ** 2, (n,))


def _gaussian_only(*kernels):
    for g in kernels:
        if g.form != GAUSSIAN:
            raise FormMismatch("the quadrature oracle covers Gaussian smoothing kernels")


def oracle_output_cross_cov(g1, g2, spec, x, x2):
    """``S1 S2 int int G1(x - z) k(z, z') G2(x2 - z') dz dz'`` by quadrature."""
    _gaussian_only(g1, g2)
    x = np.atleast_1d(x)
    return g1.sensitivity * g2.sensitivity * _per_dim(
        x, x2, g1.widths ** 2, g2.widths ** 2, _latent_var(spec, x.size))


def oracle_output_latent_cross_cov(g, spec, x, z):
    """``S int G(x - z') k(z', z) dz'`` by quadrature."""
    if spec.is_white:
        raise WhiteNoiseNotSupported("white noise has no pointwise covariance")
    _gaussian_only(g)
    return g.sensitivity * _per_dim(x, z, g.widths ** 2, spec.lengthscale ** 2, None)


def oracle_vik_cov(vik1, vik2, spec, x, x2):
    """``ST1 ST2 int int T1(x - z) k(z, z') T2(x2 - z') dz dz'`` by quadrature."""
    x = np.atleast_1d(x)
    return vik1.sensitivity * vik2.sensitivity * _per_dim(
        x, x2, vik1.widths ** 2, vik2.widths ** 2, _latent_var(spec, x.size))


def oracle_output_vik_cross_cov(g, vik, spec, x, z):
    """``S ST int int G(x - v) k(v, v') T(z - v') dv dv'`` by quadrature."""
    _gaussian_only(g)
    x = np.atleast_1d(x)
    return g.sensitivity * vik.sensitivity * _per_dim(
        x, z, g.widths ** 2, vik.widths ** 2, _latent_var(spec, x.size))


# ---------------------------------------------------------------------------
# Causal (latent force) forms


def oracle_slfm_force_cov(t, t2, D1, D2, lengthscale=None):
    """One force's contribution to ``Cov[f(t), f'(t2)]`` with unit sensitivities."""
    if lengthscale is None:
        m = min(t, t2)
        return quadrature_oracle(lambda z: math.exp(-D1 * (t - z) - D2 * (t2 - z)), (0.0, m))
    l2 = lengthscale ** 2
    return quadrature_oracle(
        lambda z, zp: math.exp(-D1 * (t - z) - D2 * (t2 - zp)) * _npdf(z - zp, l2),
        ((0.0, t), (0.0, t2)),
        points=(None, lambda z: [z]))


def oracle_slfm_cov(spec, d, d2, t, t2):
    """``Cov[f_d(t), f_d2(t2)]`` of an :class:`~convgp.slfm.SLFMSpec` by quadrature."""
    S = spec.sensitivities
    total = 0.0
    for q in range(spec.Q):
        ell = spec.lengthscales[q] if q < len(spec.lengthscales) else None
        total += S[d, q] * S[d2, q] * oracle_slfm_force_cov(
            t, t2, spec.decays[d], spec.decays[d2], ell)
    return total


def oracle_causal_gauss(t, z, D, var, lengthscale=None):
    """``int_0^t exp(-D (t - v)) int k(v, v') N(z - v' | var) dv' dv`` (or without ``k``)."""
    if lengthscale is None:
        return quadrature_oracle(lambda v: math.exp(-D * (t - v)) * _npdf(z - v, var), (0.0, t),
                                 points=[z])
    l2 = lengthscale ** 2
    lo, hi = _range([z], var + l2)
    lo = min(lo, -TAIL * np.sqrt(l2))
    hi = max(hi, t + TAIL * np.sqrt(l2))
    return quadrature_oracle(
        lambda v, vp: math.exp(-D * (t - v)) * _npdf(v - vp, l2) * _npdf(z - vp, var),
        ((0.0, t), (lo, hi)),
        points=([z], lambda v: [v, z]))


def oracle_slfm_vik_cross_cov(spec, d, q, vik, t, z):
    """``Cov[f_d(t), lambda_q(z)]`` by quadrature."""
    ell = spec.lengthscales[q] if q < len(spec.lengthscales) else None
    return spec.sensitivities[d, q] * vik.sensitivity * oracle_causal_gauss(
        t, z, spec.decays[d], vik.widths[0] ** 2, ell)


def oracle_slfm_latent_cross_cov(spec, d, q, t, z):
    """``Cov[f_d(t), u_q(z)]`` for a smooth force by quadrature."""
    if q >= len(spec.lengthscales):
        raise WhiteNoiseNotSupported("white forces have no pointwise covariance")
    return spec.sensitivities[d, q] * oracle_causal_gauss(
        t, z, spec.decays[d], spec.lengthscales[q] ** 2)


def oracle_slfm_vik_cov(vik1, vik2, force, z, z2):
    return oracle_vik_cov(vik1, vik2, force, z, z2)


# ---------------------------------------------------------------------------
# Suite


def _draw_latent(rng, p, white):
    return LatentSpec.white() if white else LatentSpec.squared_exp(rng.uniform(0.3, 2.0, p))


def _draw_gauss(rng, p):
    return SmoothingKernel.gaussian(rng.normal(), rng.uniform(0.2, 2.0, p))


def _draw_vik(rng, p):
    return VIKEntry(rng.normal(), rng.uniform(0.2, 2.0, p))


def _draw_point(rng, p, scale=1.5):
    return rng.normal(scale=scale, size=p)


def _draw_slfm(rng, Q_s=1, Q_o=1, D=2):
    return slfm.SLFMSpec(rng.uniform(0.1, 3.0, D), rng.normal(size=D),
                         rng.normal(size=(D, Q_s + Q_o)), rng.uniform(0.2, 2.0, Q_s), Q_o)


def _form_cases():
    """Closed form and oracle for one random draw of each covariance form."""

    def ff(white):
        def case(rng):
            p = int(rng.integers(1, 4))
            g1, g2, lat = _draw_gauss(rng, p), _draw_gauss(rng, p), _draw_latent(rng, p, white)
            x, x2 = _draw_point(rng, p), _draw_point(rng, p)
            return output_cross_cov(g1, g2, lat, x, x2), oracle_output_cross_cov(g1, g2, lat, x, x2)
        return case

    def fu(rng):
        p = int(rng.integers(1, 4))
        g, lat = _draw_gauss(rng, p), _draw_latent(rng, p, False)
        x, z = _draw_point(rng, p), _draw_point(rng, p)
        return output_latent_cross_cov(g, lat, x, z), oracle_output_latent_cross_cov(g, lat, x, z)

    def ll(white):
        def case(rng):
            p = int(rng.integers(1, 4))
            v1, v2, lat = _draw_vik(rng, p), _draw_vik(rng, p), _draw_latent(rng, p, white)
            x, x2 = _draw_point(rng, p), _draw_point(rng, p)
            return vik_cov(v1, v2, lat, x, x2), oracle_vik_cov(v1, v2, lat, x, x2)
        return case

    def fl(white):
        def case(rng):
            p = int(rng.integers(1, 4))
            g, v, lat = _draw_gauss(rng, p), _draw_vik(rng, p), _draw_latent(rng, p, white)
            x, z = _draw_point(rng, p), _draw_point(rng, p)
            return (output_vik_cross_cov(g, v, lat, x, z),
                    oracle_output_vik_cross_cov(g, v, lat, x, z))
        return case

    def sff(white):
        def case(rng):
            spec = _draw_slfm(rng, Q_s=0 if white else 1, Q_o=1 if white else 0)
            d, d2 = rng.integers(0, 2, size=2)
            t, t2 = rng.uniform(0.0, 5.0, size=2)
            return slfm.slfm_cov(spec, d, d2, t, t2), oracle_slfm_cov(spec, d, d2, t, t2)
        return case

    def sfl(white):
        def case(rng):
            spec = _draw_slfm(rng, Q_s=0 if white else 1, Q_o=1 if white else 0)
            d = int(rng.integers(0, 2))
            v = _draw_vik(rng, 1)
            t, z = rng.uniform(0.0, 5.0), rng.uniform(-1.0, 6.0)
            return (slfm.slfm_vik_cross_cov(spec, d, 0, v, t, z),
                    oracle_slfm_vik_cross_cov(spec, d, 0, v, t, z))
        return case

    def sfu(rng):
        spec = _draw_slfm(rng, Q_s=1, Q_o=0)
        d = int(rng.integers(0, 2))
        t, z = rng.uniform(0.0, 5.0), rng.uniform(-1.0, 6.0)
        return (slfm.slfm_latent_cross_cov(spec, d, 0, t, z),
                oracle_slfm_latent_cross_cov(spec, d, 0, t, z))

    def sll(white):
        def case(rng):
            v1, v2, lat = _draw_vik(rng, 1), _draw_vik(rng, 1), _draw_latent(rng, 1, white)
            z, z2 = rng.uniform(0.0, 5.0, size=2)
            return slfm.slfm_vik_cov(v1, v2, lat, z, z2), oracle_slfm_vik_cov(v1, v2, lat, z, z2)
        return case

    return {
        "output_cross_cov/white": ff(True),
        "output_cross_cov/se": ff(False),
        "output_latent_cross_cov": fu,
        "vik_cov/white": ll(True),
        "vik_cov/se": ll(False),
        "output_vik_cross_cov/white": fl(True),
        "output_vik_cross_cov/se": fl(False),
        "slfm_cov/white": sff(True),
        "slfm_cov/se": sff(False),
        "slfm_vik_cross_cov/white": sfl(True),
        "slfm_vik_cross_cov/se": sfl(False),
        "slfm_latent_cross_cov": sfu,
        "slfm_vik_cov/white": sll(True),
        "slfm_vik_cov/se": sll(False),
    }


FORMS = tuple(_form_cases())


def oracle_suite(seed=0, draws=100, forms=None, rtol=1e-6, atol=1e-10):
    """Compare every closed form with its oracle on random draws.

    Returns
    -------
    dict
        ``form -> (worst scaled error, number of draws)`` where the scaled
        error is ``|closed - oracle| / max(rtol * |oracle|, atol)``; a form
        passes when its worst scaled error is at most 1.
    """
    cases = _form_cases()
    out = {}
    for name in forms or FORMS:
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        worst = 0.0
        for _ in range(draws):
            closed, oracle = cases[name](rng)
            err = abs(closed - oracle) / max(rtol * abs(oracle), atol)
            worst = max(worst, err)
        out[name] = (worst, draws)
    return out

