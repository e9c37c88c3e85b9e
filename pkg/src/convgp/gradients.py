"""Analytic gradients of the three objectives and a finite-difference harness.

Gradients are computed in two stages.  First the objective is
differentiated with respect to the Gram matrices it touches (a
:class:`GradientBundle`), using trace identities rather than explicit
Kronecker products.  The bundle is then pulled back onto the kernel
parameters by the ``*_vjp`` functions of :mod:`convgp.kernels`, and
finally onto the unconstrained :class:`ParamLayout` vector.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonFiniteEvaluation
from .exact import ExactState, NoiseModel
from .kernels import (
    CAUSAL,
    DIRAC,
    GAUSSIAN,
    PER_POINT,
    KernelMatrixSpec,
    LatentSpec,
    ParamGrad,
    SmoothingKernel,
    VIKConfig,
    VIKEntry,
    kff_block_vjp,
    kff_diag_vjp,
    kff_vjp,
    kflambda_vjp,
    kfu_vjp,
    klambda_vjp,
    kuu_vjp,
)
from .linalg import chol_inverse, jitter_vjp
from .sparse import InducingState, PITCState

EXACT = "exact"
PITC = "pitc"
DTCVAR = "dtcvar"
ENGINES = (EXACT, PITC, DTCVAR)


@dataclass(eq=False)
class ModelParams:
    """Everything an engine needs besides the data.

    ``vik`` is used by DTCVAR, ``Z`` by PITC; the exact engine ignores both.
    """

    kspec: KernelMatrixSpec
    noise: NoiseModel
    vik: VIKConfig = None
    Z: np.ndarray = None


@dataclass(eq=False)
class GradientBundle:
    """Objective gradients w.r.t. the matrices it is built from.

    Attributes
    ----------
    Kff_diag : ndarray or None
        Gradient w.r.t. ``diag(K_ff)`` (DTCVAR).
    Kff : ndarray or list or None
        Full ``K_ff`` gradient (exact) or one diagonal block per output (PITC).
    Kfl : ndarray or None
        Gradient w.r.t. ``K_{f,lambda}`` (DTCVAR) or ``K_{f,u}`` (PITC).
    Kll : ndarray or None
        Symmetric gradient w.r.t. the un-jittered ``K_{lambda,lambda}`` or ``K_{u,u}``.
    noise : ndarray
        Gradient w.r.t. each per-observation noise variance.
    y : ndarray
        Gradient w.r.t. the residual targets ``y - m``.
    """

    noise: np.ndarray
    y: np.ndarray
    Kff_diag: np.ndarray = None
    Kff: object = None
    Kfl: np.ndarray = None
    Kll: np.ndarray = None
    params: np.ndarray = None


def bound_matrix_grads(state):
    """Matrix-level gradients of the DTCVAR bound from an :class:`InducingState`."""
    st = state
    s, r = st.s, st.y
    Kfl = st.Kfl
    Li, Ai = st.inverses()
    beta = st.beta
    mu = Kfl @ beta
    C = Li - Ai - np.outer(beta, beta)
    G_fl = (Kfl @ C + np.outer(r, beta)) / s[:, None]
    KfLi = Kfl @ Li
    G_ll = 0.5 * (C - KfLi.T @ (KfLi / s[:, None]))
    G_ll = jitter_vjp(0.5 * (G_ll + G_ll.T), st.jitter)
    ktilde = st.kff_diag - st.qff_diag()
    quad = np.sum((Kfl @ Ai) * Kfl, axis=1)
    G_s = ((r - mu) ** 2 + quad + ktilde - s) / (2.0 * s * s)
    return GradientBundle(noise=G_s, y=-(r - mu) / s, Kff_diag=-0.5 / s, Kfl=G_fl, Kll=G_ll)


def pitc_matrix_grads(state):
    """Matrix-level gradients of the PITC log likelihood from a :class:`PITCState`."""
    st = state
    a = st.alpha
    Kfu = st.Kfu
    P = chol_inverse(st.Luu)
    # W = (alpha alpha^T - Cov^-1) / 2, applied without forming it
    WK = 0.5 * (np.outer(a, a @ Kfu) - st.cov_inv_apply(Kfu))
    blocks, diagW = [], np.empty_like(a)
    bdWK = np.empty_like(Kfu)
    for d, sl in enumerate(st.blocks()):
        Wdd = 0.5 * (np.outer(a[sl], a[sl]) - st.cov_inv_block(d))
        blocks.append(Wdd)
        diagW[sl] = np.diag(Wdd)
        bdWK[sl] = Wdd @ Kfu[sl]
    Wp = WK - bdWK
    G_fu = 2.0 * Wp @ P
    G_P = Kfu.T @ Wp
    G_uu = -P @ (0.5 * (G_P + G_P.T)) @ P
    G_uu = jitter_vjp(0.5 * (G_uu + G_uu.T), st.jitter)
    return GradientBundle(noise=diagW, y=-a, Kff=blocks, Kfl=G_fu, Kll=G_uu)


def exact_matrix_grads(state):
    """Matrix-level gradients of the exact log marginal likelihood."""
    a = state.alpha
    W = 0.5 * (np.outer(a, a) - chol_inverse(state.L))
    return GradientBundle(noise=np.diag(W).copy(), y=-a, Kff=W)


def _mean_grad(kspec, X, gm, grad):
    """Chain ``dF/dm`` through the causal mean ``exp(-D t) f0``."""
    o = 0
    for d, x in enumerate(X):
        t = x[:, 0]
        g = gm[o:o + len(t)]
        o += len(t)
        e = np.exp(-kspec.smoothing[d][0].decay * t)
        grad.f0[d] += g @ e
        grad.decay[d] += -kspec.initial_conditions[d] * (g @ (t * e))


def engine_value_and_grads(engine, data, params):
    """Objective value and its :class:`ParamGrad` for one engine."""
    kspec, noise = params.kspec, params.noise
    p = kspec.input_dim
    if engine == DTCVAR:
        st = InducingState(data, kspec, noise, params.vik)
        value = st.bound().total
        b = bound_matrix_grads(st)
        g = ParamGrad(kspec.D, kspec.Q, p, params.vik.K, data.num_obs)
        kff_diag_vjp(kspec, st.X, b.Kff_diag, g)
        kflambda_vjp(kspec, params.vik, st.X, b.Kfl, g)
        klambda_vjp(params.vik, kspec.latents, b.Kll, g)
    elif engine == PITC:
        st = PITCState(data, kspec, noise, params.Z)
        value = st.log_marginal()
        b = pitc_matrix_grads(st)
        g = ParamGrad(kspec.D, kspec.Q, p, st.Z.shape[0], data.num_obs)
        for d, (Gd, x) in enumerate(zip(b.Kff, st.X)):
            kff_block_vjp(kspec, d, x, d, x, Gd, g)
        kfu_vjp(kspec, st.Z, st.X, b.Kfl, g)
        kuu_vjp(kspec.latents, st.Z, b.Kll, g)
    elif engine == EXACT:
        st = ExactState(data, kspec, noise)
        value = st.log_marginal()
        b = exact_matrix_grads(st)
        g = ParamGrad(kspec.D, kspec.Q, p, 0, data.num_obs)
        kff_vjp(kspec, st.X, b.Kff, g)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    g.noise = b.noise
    g.y = b.y
    if kspec.family == CAUSAL:
        _mean_grad(kspec, st.X, -b.y, g)
    return value, g


# ---------------------------------------------------------------------------
# Parameter layout


@dataclass
class _Block:
    name: str
    labels: list
    start: int = 0

    @property
    def size(self):
        return len(self.labels)

    @property
    def slice(self):
        return slice(self.start, self.start + self.size)


PARAM_CLASSES = ("log_width", "sensitivity", "log_decay", "f0", "log_lengthscale",
                 "log_noise", "Z", "log_vik_width", "vik_sensitivity")
VARIATIONAL_CLASSES = ("Z", "log_vik_width", "vik_sensitivity")


class ParamLayout:
    """Map between :class:`ModelParams` and a flat unconstrained vector.

    Positive quantities are stored as logs.  Classes listed in ``fixed``
    are left out of the vector and keep their template values.
    """

    def __init__(self, template, engine=DTCVAR, fixed=()):
        self.template = template
        self.engine = engine
        self.fixed = tuple(fixed)
        unknown = set(self.fixed) - set(PARAM_CLASSES)
        if unknown:
            raise ValueError(f"unknown parameter classes {sorted(unknown)}")
        ks = template.kspec
        D, Q, p = ks.D, ks.Q, ks.input_dim
        blocks = []

        def add(name, labels):
            if name not in self.fixed and labels:
                blocks.append(_Block(name, labels))

        add("log_width", [f"log_width[d={d},q={q},dim={j}]"
                          for d in range(D) for q in range(Q)
                          if ks.smoothing[d][q].form == GAUSSIAN for j in range(p)])
        add("sensitivity", [f"sensitivity[d={d},q={q}]" for d in range(D) for q in range(Q)])
        if ks.family == CAUSAL:
            add("log_decay", [f"log_decay[d={d}]" for d in range(D)])
            add("f0", [f"f0[d={d}]" for d in range(D)])
        add("log_lengthscale", [f"log_lengthscale[q={q},dim={j}]"
                                for q in range(Q) if not ks.latents[q].is_white
                                for j in range(p)])
        add("log_noise", [f"log_noise[d={d}]" for d in range(D)])
        if engine == DTCVAR:
            vik = template.vik
            if vik is None:
                raise ValueError("the DTCVAR engine needs inducing kernels")
            add("Z", [f"Z[k={k},dim={j}]" for k in range(vik.K) for j in range(p)])
            if vik.mode == PER_POINT:
                add("log_vik_width", [f"log_vik_width[q={q},k={k},dim={j}]"
                                      for q in range(Q) for k in range(vik.K) for j in range(p)])
                add("vik_sensitivity", [f"vik_sensitivity[q={q},k={k}]"
                                        for q in range(Q) for k in range(vik.K)])
            else:
                add("log_vik_width", [f"log_vik_width[q={q},dim={j}]"
                                      for q in range(Q) for j in range(p)])
                add("vik_sensitivity", [f"vik_sensitivity[q={q}]" for q in range(Q)])
        elif engine == PITC:
            Z = np.atleast_2d(template.Z)
            add("Z", [f"Z[k={k},dim={j}]" for k in range(Z.shape[0]) for j in range(p)])
        start = 0
        for b in blocks:
            b.start = start
            start += b.size
        self.blocks = {b.name: b for b in blocks}
        self.size = start

    @property
    def labels(self):
        return [lab for b in self.blocks.values() for lab in b.labels]

    def classes(self):
        """Parameter class of every coordinate."""
        return [b.name for b in self.blocks.values() for _ in range(b.size)]

    def mask(self, names):
        names = set(names)
        return np.array([c in names for c in self.classes()], dtype=bool)

    # -- natural <-> flat

    def _fields(self, params):
        ks = params.kspec
        D, Q = ks.D, ks.Q
        out = {
            "log_width": [np.log(ks.smoothing[d][q].widths) for d in range(D) for q in range(Q)
                          if ks.smoothing[d][q].form == GAUSSIAN],
            "sensitivity": [ks.smoothing[d][q].sensitivity for d in range(D) for q in range(Q)],
            "log_lengthscale": [np.log(lat.lengthscale) for lat in ks.latents if not lat.is_white],
            "log_noise": np.log(params.noise.sigma2),
        }
        if ks.family == CAUSAL:
            out["log_decay"] = [np.log(ks.smoothing[d][0].decay) for d in range(D)]
            out["f0"] = ks.initial_conditions
        if self.engine == DTCVAR:
            vik = params.vik
            out["Z"] = vik.inducing_inputs
            entries = ([e for row in vik.params for e in row] if vik.mode == PER_POINT
                       else list(vik.params))
            out["log_vik_width"] = [np.log(e.widths) for e in entries]
            out["vik_sensitivity"] = [e.sensitivity for e in entries]
        elif self.engine == PITC:
            out["Z"] = params.Z
        return out

    def pack(self, params=None):
        params = params or self.template
        f = self._fields(params)
        vec = np.empty(self.size)
        for name, b in self.blocks.items():
            vals = f[name]
            arr = (np.concatenate([np.ravel(v) for v in vals]) if isinstance(vals, list)
                   else np.ravel(vals))
            vec[b.slice] = arr
        return vec

    def unpack(self, theta):
        """Rebuild :class:`ModelParams` from a flat vector."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.size,):
            raise DimensionMismatch(f"expected {self.size} parameters, got {theta.shape}")
        t = self.template
        ks = t.kspec
        D, Q, p = ks.D, ks.Q, ks.input_dim

        def take(name):
            b = self.blocks.get(name)
            return None if b is None else iter(theta[b.slice])

        def nxt(it, n=None):
            if n is None:
                return next(it)
            return np.array([next(it) for _ in range(n)])

        it_w, it_s = take("log_width"), take("sensitivity")
        it_D, it_f0 = take("log_decay"), take("f0")
        decays = [np.exp(nxt(it_D)) if it_D else ks.smoothing[d][0].decay for d in range(D)]
        rows = []
        for d in range(D):
            row = []
            for q in range(Q):
                g = ks.smoothing[d][q]
                S = nxt(it_s) if it_s else g.sensitivity
                if g.form == GAUSSIAN:
                    w = np.exp(nxt(it_w, p)) if it_w else g.widths
                    row.append(SmoothingKernel.gaussian(S, w))
                elif g.form == DIRAC:
                    row.append(SmoothingKernel.dirac(S))
                else:
                    row.append(SmoothingKernel.causal(S, decays[d]))
            rows.append(row)
        it_l = take("log_lengthscale")
        latents = []
        for lat in ks.latents:
            if lat.is_white:
                latents.append(lat)
            else:
                latents.append(LatentSpec.squared_exp(np.exp(nxt(it_l, p)) if it_l else lat.lengthscale))
        ic = None
        if ks.family == CAUSAL:
            ic = nxt(it_f0, D) if it_f0 else ks.initial_conditions.copy()
        kspec = KernelMatrixSpec(latents, rows, ic)
        it_n = take("log_noise")
        noise = NoiseModel(np.exp(nxt(it_n, D)) if it_n else t.noise.sigma2)
        out = ModelParams(kspec, noise, t.vik, t.Z)
        if self.engine == DTCVAR:
            vik = t.vik
            it_z = take("Z")
            Z = nxt(it_z, vik.K * p).reshape(vik.K, p) if it_z else vik.inducing_inputs
            it_vw, it_vs = take("log_vik_width"), take("vik_sensitivity")
            old = ([e for row in vik.params for e in row] if vik.mode == PER_POINT
                   else list(vik.params))
            entries = [VIKEntry(nxt(it_vs) if it_vs else e.sensitivity,
                                np.exp(nxt(it_vw, p)) if it_vw else e.widths) for e in old]
            if vik.mode == PER_POINT:
                entries = [entries[q * vik.K:(q + 1) * vik.K] for q in range(Q)]
            out.vik = VIKConfig(Z, entries, vik.mode)
        elif self.engine == PITC:
            it_z = take("Z")
            Zt = np.atleast_2d(t.Z)
            out.Z = nxt(it_z, Zt.size).reshape(Zt.shape) if it_z else Zt
        return out

    def grad_vector(self, params, g):
        """Convert a natural-parameter :class:`ParamGrad` into a flat gradient."""
        ks = params.kspec
        D, Q = ks.D, ks.Q
        parts = {}
        parts["log_width"] = np.concatenate(
            [g.W2[d, q] * 2.0 * ks.smoothing[d][q].widths ** 2
             for d in range(D) for q in range(Q) if ks.smoothing[d][q].form == GAUSSIAN]
            or [np.zeros(0)])
        parts["sensitivity"] = g.S.ravel()
        if ks.family == CAUSAL:
            decay = np.array([ks.smoothing[d][0].decay for d in range(D)])
            parts["log_decay"] = g.decay * decay
            parts["f0"] = g.f0
        parts["log_lengthscale"] = np.concatenate(
            [g.L2[q] * 2.0 * lat.lengthscale ** 2 for q, lat in enumerate(ks.latents)
             if not lat.is_white] or [np.zeros(0)])
        sigma_obs = params.noise.sigma2[self._output_ids]
        gs = g.noise * (sigma_obs / self._weights)
        parts["log_noise"] = np.bincount(self._output_ids, weights=gs, minlength=D)
        if self.engine == DTCVAR:
            vik = params.vik
            VS, T2 = vik.arrays()
            parts["Z"] = g.Z.ravel()
            dlogw = g.T2 * 2.0 * T2
            if vik.mode == PER_POINT:
                parts["log_vik_width"] = dlogw.ravel()
                parts["vik_sensitivity"] = g.VS.ravel()
            else:
                parts["log_vik_width"] = dlogw.sum(axis=1).ravel()
                parts["vik_sensitivity"] = g.VS.sum(axis=1)
        elif self.engine == PITC:
            parts["Z"] = g.Z.ravel()
        vec = np.empty(self.size)
        for name, b in self.blocks.items():
            vec[b.slice] = parts[name]
        return vec

    def bind(self, data):
        """Record per-observation output ids and weights used by the noise chain."""
        self._output_ids = data.output_ids()
        self._weights = data.w
        return self


def make_objective(engine, data, layout):
    """Return ``f(theta) -> (value, gradient)`` for the chosen engine."""
    if engine != layout.engine:
        raise ValueError("layout was built for a different engine")
    layout.bind(data)

    def f(theta):
        params = layout.unpack(theta)
        value, g = engine_value_and_grads(engine, data, params)
        return value, layout.grad_vector(params, g)

    return f


# ---------------------------------------------------------------------------
# Finite differences


@dataclass
class FDReport:
    """Per-parameter comparison of analytic and central-difference gradients."""

    analytic: np.ndarray
    numeric: np.ndarray
    labels: list
    rtol: float
    atol: float
    abs_err: np.ndarray = field(init=False)
    rel_err: np.ndarray = field(init=False)

    def __post_init__(self):
        self.abs_err = np.abs(self.analytic - self.numeric)
        scale = np.maximum(np.abs(self.analytic), np.abs(self.numeric))
        with np.errstate(divide="ignore", invalid="ignore"):
            self.rel_err = np.where(scale > 0, self.abs_err / scale, 0.0)

    @property
    def failures(self):
        """Indices where both the relative and the absolute test fail."""
        return np.flatnonzero((self.rel_err >= self.rtol) & (self.abs_err > self.atol))

    @property
    def ok(self):
        return self.failures.size == 0

    @property
    def worst(self):
        """``(label, rel_err, abs_err)`` of the entry furthest outside tolerance."""
        if not len(self.labels):
            return None
        score = np.minimum(self.rel_err / self.rtol, self.abs_err / self.atol)
        i = int(np.argmax(score))
        return self.labels[i], float(self.rel_err[i]), float(self.abs_err[i])


def fd_check(f, theta, step=1e-6, grad=None, labels=None, rtol=1e-5, atol=1e-8):
    """Compare an analytic gradient against central differences.

    Parameters
    ----------
    f : callable
        ``f(theta)`` returning either a scalar or ``(value, gradient)``.
    theta : array_like
        Point of evaluation.
    step : float
        Central-difference step on the (unconstrained) parameter scale.
    grad : array_like, optional
        Gradient to test; taken from ``f(theta)`` when omitted.
    labels : list of str, optional
        Names used when reporting the worst offender.

    Raises
    ------
    NonFiniteEvaluation
        If ``f`` is not finite at some ``theta +- step * e_i``.
    """
    theta = np.asarray(theta, dtype=float)

    def value(x):
        out = f(x)
        v = out[0] if isinstance(out, tuple) else out
        return float(v)

    if grad is None:
        out = f(theta)
        if not isinstance(out, tuple):
            raise ValueError("f returns no gradient; pass grad explicitly")
        grad = out[1]
    grad = np.asarray(grad, dtype=float)
    labels = list(labels) if labels is not None else [f"theta[{i}]" for i in range(theta.size)]
    num = np.empty(theta.size)
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += step
        dn[i] -= step
        hi, lo = value(up), value(dn)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NonFiniteEvaluation(f"objective not finite around {labels[i]}")
        # divide by the step actually taken after rounding
        num[i] = (hi - lo) / (up[i] - dn[i])
    return FDReport(grad, num, labels, rtol, atol)

