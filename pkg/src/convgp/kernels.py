"""Covariance functions for convolution-process multi-output GPs.

Every output is ``f_d(x) = sum_q int G_dq(x - z) u_q(z) dz``.  Smoothing
kernels are normalised Gaussians ``S * N(x | 0, diag(w^2))`` (or scaled
Dirac deltas, which recover the ICM, or causal exponentials for the
stochastic latent force model).  Latents are unit white noise or
normalised squared exponentials ``N(x - x' | 0, diag(l^2))``.  Since all
Gaussian convolutions close in form, every covariance in this module is a
scaled Gaussian density of the input difference whose variance is the sum
of the variances of the kernels involved.

Block builders come in pairs: ``build_*`` returns a Gram matrix and
``*_vjp`` pulls an upstream gradient ``dF/dK`` back onto the parameters,
accumulating into a :class:`ParamGrad`.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _causal
from .errors import (
    DimensionMismatch,
    FormMismatch,
    NegativeTime,
    WhiteNoiseNotSupported,
    WhiteNoisePointwiseEval,
)

WHITE = "white"
SE = "se"
GAUSSIAN = "gaussian"
DIRAC = "dirac"
CAUSAL = "causal"
SHARED = "shared"
PER_POINT = "per_point"

_LOG_2PI = np.log(2.0 * np.pi)


def as_inputs(X, dim=None):
    """Coerce to a float array of shape ``(n, p)``; 1-D input means p = 1."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(-1, 1) if dim in (None, 1) else X.reshape(1, -1)
    if X.ndim != 2:
        raise DimensionMismatch(f"inputs must be 2-D, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise DimensionMismatch(f"expected input dimension {dim}, got {X.shape[1]}")
    return X


def _as_point(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


def _positive(values, name):
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError(f"{name} must be positive and finite, got {values!r}")
    return arr


@dataclass(frozen=True, eq=False)
class LatentSpec:
    """A latent process: unit white noise or a normalised SE kernel."""

    kind: str
    lengthscale: np.ndarray = None

    def __post_init__(self):
        if self.kind == WHITE:
            if self.lengthscale is not None:
                raise ValueError("white-noise latents carry no parameters")
        elif self.kind == SE:
            object.__setattr__(self, "lengthscale", _positive(self.lengthscale, "lengthscale"))
        else:
            raise ValueError(f"unknown latent kind {self.kind!r}")

    @classmethod
    def white(cls):
        return cls(WHITE)

    @classmethod
    def squared_exp(cls, lengthscale):
        return cls(SE, lengthscale)

    @property
    def is_white(self):
        return self.kind == WHITE

    def variance(self):
        """Per-dimension variance added by this latent to a convolution."""
        if self.is_white:
            return 0.0
        return self.lengthscale ** 2


@dataclass(frozen=True, eq=False)
class SmoothingKernel:
    """Smoothing kernel ``G_dq``.

    ``gaussian``: ``S * N(x | 0, diag(widths^2))``; ``dirac``: ``S * delta(x)``;
    ``causal``: ``S * exp(-decay * x)`` for ``x >= 0``.
    """

    form: str
    sensitivity: float
    widths: np.ndarray = None
    decay: float = None

    def __post_init__(self):
        object.__setattr__(self, "sensitivity", float(self.sensitivity))
        if not np.isfinite(self.sensitivity):
            raise ValueError("sensitivity must be finite")
        if self.form == GAUSSIAN:
            object.__setattr__(self, "widths", _positive(self.widths, "widths"))
        elif self.form == CAUSAL:
            object.__setattr__(self, "decay", float(_positive(self.decay, "decay")[0]))
        elif self.form != DIRAC:
            raise ValueError(f"unknown smoothing form {self.form!r}")

    @classmethod
    def gaussian(cls, sensitivity, widths):
        return cls(GAUSSIAN, sensitivity, widths=widths)

    @classmethod
    def dirac(cls, sensitivity):
        return cls(DIRAC, sensitivity)

    @classmethod
    def causal(cls, sensitivity, decay):
        return cls(CAUSAL, sensitivity, decay=decay)

    def variance(self):
        if self.form == GAUSSIAN:
            return self.widths ** 2
        if self.form == DIRAC:
            return 0.0
        raise FormMismatch("causal kernels have no Gaussian variance")


@dataclass(frozen=True, eq=False)
class VIKEntry:
    """Parameters of one Gaussian inducing kernel ``T = S_T * N(x | 0, diag(w^2))``."""

    sensitivity: float
    widths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sensitivity", float(self.sensitivity))
        object.__setattr__(self, "widths", _positive(self.widths, "widths"))


@dataclass(eq=False)
class VIKConfig:
    """Inducing inputs ``Z`` plus the inducing-kernel parameters.

    In ``shared`` mode ``params`` holds one :class:`VIKEntry` per latent;
    in ``per_point`` mode it holds ``Q`` lists of ``K`` entries.
    """

    inducing_inputs: np.ndarray
    params: list
    mode: str = SHARED

    def __post_init__(self):
        Z = np.asarray(self.inducing_inputs, dtype=float)
        if Z.ndim == 1:
            Z = Z.reshape(-1, 1)
        if Z.ndim != 2 or Z.shape[0] < 1:
            raise ValueError("need at least one inducing input")
        self.inducing_inputs = Z
        p = Z.shape[1]
        if self.mode == SHARED:
            entries = list(self.params)
        elif self.mode == PER_POINT:
            if any(len(row) != Z.shape[0] for row in self.params):
                raise ValueError("per-point mode needs K entries for every latent")
            entries = [e for row in self.params for e in row]
        else:
            raise ValueError(f"unknown VIK mode {self.mode!r}")
        for e in entries:
            if e.widths.shape != (p,):
                raise DimensionMismatch("VIK widths must match the input dimension")

    @property
    def K(self):
        return self.inducing_inputs.shape[0]

    @property
    def num_latents(self):
        return len(self.params)

    def entry(self, q, k=0):
        if self.mode == SHARED:
            return self.params[q]
        return self.params[q][k]

    def arrays(self):
        """Sensitivities ``(Q, K)`` and squared widths ``(Q, K, p)``."""
        Q, K = self.num_latents, self.K
        p = self.inducing_inputs.shape[1]
        sens = np.empty((Q, K))
        var = np.empty((Q, K, p))
        for q in range(Q):
            for k in range(K):
                e = self.entry(q, k)
                sens[q, k] = e.sensitivity
                var[q, k] = e.widths ** 2
        return sens, var


@dataclass(eq=False)
class KernelMatrixSpec:
    """Latents, the ``D x Q`` grid of smoothing kernels and (causal only) initial conditions."""

    latents: list
    smoothing: list
    initial_conditions: np.ndarray = None

    def __post_init__(self):
        self.latents = list(self.latents)
        self.smoothing = [list(row) for row in self.smoothing]
        Q = len(self.latents)
        if Q < 1 or not self.smoothing:
            raise DimensionMismatch("need at least one latent and one output")
        if any(len(row) != Q for row in self.smoothing):
            raise DimensionMismatch("every (d, q) pair needs exactly one smoothing kernel")
        forms = {g.form for row in self.smoothing for g in row}
        if CAUSAL in forms and forms != {CAUSAL}:
            raise FormMismatch("causal kernels cannot be mixed with Gaussian ones")
        dims = {len(g.widths) for row in self.smoothing for g in row if g.form == GAUSSIAN}
        dims |= {len(l.lengthscale) for l in self.latents if not l.is_white}
        if len(dims) > 1:
            raise DimensionMismatch(f"inconsistent input dimensions {sorted(dims)}")
        if self.family == CAUSAL:
            if dims - {1}:
                raise DimensionMismatch("causal kernels take one-dimensional time inputs")
            for row in self.smoothing:
                if len({g.decay for g in row}) != 1:
                    raise ValueError("all forces acting on an output share its decay")
            if self.initial_conditions is None:
                self.initial_conditions = np.zeros(self.D)
            self.initial_conditions = np.asarray(self.initial_conditions, dtype=float).reshape(self.D)
        elif self.initial_conditions is not None:
            raise ValueError("initial conditions only apply to causal kernels")
        for row in self.smoothing:
            for g, lat in zip(row, self.latents):
                if g.form == DIRAC and lat.is_white:
                    raise FormMismatch("a Dirac kernel on white noise has infinite variance")
        self._dim = dims.pop() if dims else None

    @property
    def D(self):
        return len(self.smoothing)

    @property
    def Q(self):
        return len(self.latents)

    @property
    def family(self):
        return CAUSAL if self.smoothing[0][0].form == CAUSAL else GAUSSIAN

    @property
    def input_dim(self):
        return 1 if self.family == CAUSAL else self._dim

    def mean(self, d, X):
        """Prior mean of output ``d``; non-zero only for causal kernels."""
        X = as_inputs(X)
        if self.family != CAUSAL:
            return np.zeros(X.shape[0])
        return np.exp(-self.smoothing[d][0].decay * X[:, 0]) * self.initial_conditions[d]

    def arrays(self):
        return _Arrays(self)


class _Arrays:
    """Parameter arrays pulled out of a :class:`KernelMatrixSpec`."""

    def __init__(self, kspec):
        D, Q = kspec.D, kspec.Q
        p = kspec.input_dim or 1
        self.family = kspec.family
        self.D, self.Q, self.p = D, Q, p
        self.S = np.array([[g.sensitivity for g in row] for row in kspec.smoothing])
        self.white = np.array([lat.is_white for lat in kspec.latents])
        self.L2 = np.zeros((Q, p))
        for q, lat in enumerate(kspec.latents):
            if not lat.is_white:
                self.L2[q] = lat.lengthscale ** 2
        if self.family == CAUSAL:
            self.decay = np.array([row[0].decay for row in kspec.smoothing])
            self.ell = np.sqrt(self.L2[:, 0])
            self.f0 = kspec.initial_conditions
        else:
            self.W2 = np.zeros((D, Q, p))
            for d, row in enumerate(kspec.smoothing):
                for q, g in enumerate(row):
                    self.W2[d, q] = g.variance()


@dataclass(eq=False)
class ParamGrad:
    """Gradients w.r.t. natural (untransformed) parameters.

    ``W2``, ``L2`` and ``T2`` are gradients w.r.t. squared widths and
    lengthscales; ``noise`` and ``y`` are per-observation.
    """

    D: int
    Q: int
    p: int
    K: int = 0
    M: int = 0
    S: np.ndarray = field(init=False)
    W2: np.ndarray = field(init=False)
    L2: np.ndarray = field(init=False)
    decay: np.ndarray = field(init=False)
    f0: np.ndarray = field(init=False)
    Z: np.ndarray = field(init=False)
    VS: np.ndarray = field(init=False)
    T2: np.ndarray = field(init=False)
    noise: np.ndarray = field(init=False)
    y: np.ndarray = field(init=False)

    def __post_init__(self):
        D, Q, p, K, M = self.D, self.Q, self.p, self.K, self.M
        self.S = np.zeros((D, Q))
        self.W2 = np.zeros((D, Q, p))
        self.L2 = np.zeros((Q, p))
        self.decay = np.zeros(D)
        self.f0 = np.zeros(D)
        self.Z = np.zeros((K, p))
        self.VS = np.zeros((Q, K))
        self.T2 = np.zeros((Q, K, p))
        self.noise = np.zeros(M)
        self.y = np.zeros(M)


# ---------------------------------------------------------------------------
# Gaussian block primitive


def _broadcast_var(V, p):
    V = np.asarray(V, dtype=float)
    return np.broadcast_to(V, (1, p)) if V.ndim < 2 else V


def gauss_block(X1, X2, V1, V2):
    """``N(x1_i - x2_j | 0, diag(V1_i + V2_j))`` for all pairs.

    ``V1`` is ``(p,)`` or ``(n1, p)``, ``V2`` is ``(p,)`` or ``(n2, p)``.
    """
    X1, X2 = np.asarray(X1, float), np.asarray(X2, float)
    n1, p = X1.shape
    n2 = X2.shape[0]
    V1 = _broadcast_var(V1, p)
    V2 = _broadcast_var(V2, p)
    logn = np.zeros((n1, n2))
    for k in range(p):
        Vk = V1[:, k, None] + V2[None, :, k]
        r = X1[:, k, None] - X2[None, :, k]
        logn -= 0.5 * (_LOG_2PI + np.log(Vk) + r * r / Vk)
    return np.exp(logn)


def gauss_block_vjp(X1, X2, V1, V2, H):
    """Backward pass of :func:`gauss_block` given ``H = dF/dN * N``.

    Returns gradients for ``X1, X2, V1, V2``; variance gradients keep the
    shape the variances were passed in (``(p,)`` ones are summed).
    """
    X1, X2 = np.asarray(X1, float), np.asarray(X2, float)
    n1, p = X1.shape
    n2 = X2.shape[0]
    V1a, V2a = np.asarray(V1, float), np.asarray(V2, float)
    V1b = _broadcast_var(V1a, p)
    V2b = _broadcast_var(V2a, p)
    gX1 = np.empty((n1, p))
    gX2 = np.empty((n2, p))
    gV1 = np.empty((n1, p))
    gV2 = np.empty((n2, p))
    for k in range(p):
        Vk = V1b[:, k, None] + V2b[None, :, k]
        r = X1[:, k, None] - X2[None, :, k]
        Hr = H * r / Vk
        gX1[:, k] = -Hr.sum(axis=1)
        gX2[:, k] = Hr.sum(axis=0)
        He = H * (0.5 * (r * r / Vk - 1.0) / Vk)
        gV1[:, k] = He.sum(axis=1)
        gV2[:, k] = He.sum(axis=0)
    if V1a.ndim < 2:
        gV1 = gV1.sum(axis=0)
    if V2a.ndim < 2:
        gV2 = gV2.sum(axis=0)
    return gX1, gX2, gV1, gV2


def _gauss_peak(V):
    """``N(0 | 0, diag(V))``."""
    return float(np.exp(-0.5 * np.sum(_LOG_2PI + np.log(V))))


def _check_times(t):
    if np.any(t < 0):
        raise NegativeTime("causal kernels are defined for t >= 0")


# ---------------------------------------------------------------------------
# Pointwise closed forms


def latent_cov(spec, x, x2):
    """Normalised SE covariance ``N(x - x2 | 0, diag(l^2))``."""
    if spec.is_white:
        raise WhiteNoisePointwiseEval("white noise has no pointwise covariance")
    x, x2 = _as_point(x), _as_point(x2)
    return float(gauss_block(x[None], x2[None], spec.variance(), np.zeros_like(x))[0, 0])


def _require_gaussian(*kernels):
    for g in kernels:
        if g.form == CAUSAL:
            raise FormMismatch("causal kernels are handled by convgp.slfm")


def output_cross_cov(g1, g2, spec, x, x2):
    """Per-latent term of ``Cov[f_d(x), f_d'(x2)]``."""
    _require_gaussian(g1, g2)
    x, x2 = _as_point(x), _as_point(x2)
    V = np.broadcast_to(g1.variance() + g2.variance() + spec.variance(), x.shape)
    if np.any(V == 0):
        raise FormMismatch("Dirac kernels on white noise have no finite covariance")
    n = gauss_block(x[None], x2[None], V, np.zeros_like(x))[0, 0]
    return g1.sensitivity * g2.sensitivity * float(n)


def output_latent_cross_cov(g, spec, x, z):
    """``Cov[f_d(x), u_q(z)]`` for a smooth latent."""
    if spec.is_white:
        raise WhiteNoiseNotSupported("plain inducing variables need smooth latents")
    _require_gaussian(g)
    x, z = _as_point(x), _as_point(z)
    V = np.broadcast_to(g.variance() + spec.variance(), x.shape)
    return g.sensitivity * float(gauss_block(x[None], z[None], V, np.zeros_like(x))[0, 0])


def vik_cov(vik1, vik2, spec, x, x2):
    """``Cov[lambda_q(x), lambda_q(x2)]`` between two inducing kernels of one latent."""
    x, x2 = _as_point(x), _as_point(x2)
    V = vik1.widths ** 2 + vik2.widths ** 2 + spec.variance()
    n = gauss_block(x[None], x2[None], V, np.zeros_like(x))[0, 0]
    return vik1.sensitivity * vik2.sensitivity * float(n)


def output_vik_cross_cov(g, vik, spec, x, z):
    """``Cov[f_d(x), lambda_q(z)]``."""
    _require_gaussian(g)
    x, z = _as_point(x), _as_point(z)
    V = g.variance() + vik.widths ** 2 + spec.variance()
    n = gauss_block(x[None], z[None], V, np.zeros_like(x))[0, 0]
    return g.sensitivity * vik.sensitivity * float(n)


def icm_cov(a, specs, d, d2, x, x2):
    """Intrinsic/linear coregionalisation covariance ``sum_q a_dq a_d'q k_q(x, x2)``."""
    a = np.asarray(a, dtype=float)
    return float(sum(a[d, q] * a[d2, q] * latent_cov(s, x, x2) for q, s in enumerate(specs)))


# ---------------------------------------------------------------------------
# Blocks: output/output


def _ff_block(A, q, d1, X1, d2, X2, grad=None, G=None):
    S12 = A.S[d1, q] * A.S[d2, q]
    if A.family == CAUSAL:
        t1, t2 = X1[:, 0, None], X2[None, :, 0]
        if A.white[q]:
            out = _causal.white_cov(t1, t2, A.decay[d1], A.decay[d2], grad=grad is not None)
        else:
            out = _causal.se_cov(t1, t2, A.decay[d1], A.decay[d2], A.ell[q], grad=grad is not None)
        if grad is None:
            return S12 * out
        kern, parts = out
        H = G * S12
        grad.decay[d1] += np.sum(H * parts["D1"])
        grad.decay[d2] += np.sum(H * parts["D2"])
        if not A.white[q]:
            grad.L2[q, 0] += np.sum(H * parts["ell"]) / (2.0 * A.ell[q])
        GK = np.sum(G * kern)
        grad.S[d1, q] += A.S[d2, q] * GK
        grad.S[d2, q] += A.S[d1, q] * GK
        return None
    V = A.W2[d1, q] + A.W2[d2, q] + A.L2[q]
    zero = np.zeros(A.p)
    N = gauss_block(X1, X2, V, zero)
    if grad is None:
        return S12 * N
    GN = np.sum(G * N)
    grad.S[d1, q] += A.S[d2, q] * GN
    grad.S[d2, q] += A.S[d1, q] * GN
    if S12 != 0.0:
        _, _, gV, _ = gauss_block_vjp(X1, X2, V, zero, G * N * S12)
        grad.W2[d1, q] += gV
        grad.W2[d2, q] += gV
        if not A.white[q]:
            grad.L2[q] += gV
    return None


def _ff_diag(A, q, d, X, grad=None, g=None):
    S2 = A.S[d, q] ** 2
    if A.family == CAUSAL:
        t = X[:, 0]
        if A.white[q]:
            out = _causal.white_cov(t, t, A.decay[d], A.decay[d], grad=grad is not None)
        else:
            out = _causal.se_cov(t, t, A.decay[d], A.decay[d], A.ell[q], grad=grad is not None)
        if grad is None:
            return S2 * out
        kern, parts = out
        grad.decay[d] += S2 * np.sum(g * (parts["D1"] + parts["D2"]))
        if not A.white[q]:
            grad.L2[q, 0] += S2 * np.sum(g * parts["ell"]) / (2.0 * A.ell[q])
        grad.S[d, q] += 2.0 * A.S[d, q] * np.sum(g * kern)
        return None
    V = 2.0 * A.W2[d, q] + A.L2[q]
    n = _gauss_peak(V)
    if grad is None:
        return np.full(X.shape[0], S2 * n)
    gs = float(np.sum(g))
    grad.S[d, q] += 2.0 * A.S[d, q] * n * gs
    gV = -0.5 * S2 * n * gs / V
    grad.W2[d, q] += 2.0 * gV
    if not A.white[q]:
        grad.L2[q] += gV
    return None


def _offsets(X):
    return np.concatenate([[0], np.cumsum([x.shape[0] for x in X])])


def _inputs_list(kspec, X):
    if not isinstance(X, (list, tuple)):
        raise DimensionMismatch("inputs must be given as one array per output")
    if len(X) != kspec.D:
        raise DimensionMismatch(f"expected inputs for {kspec.D} outputs, got {len(X)}")
    out = [as_inputs(x, kspec.input_dim) for x in X]
    if kspec.family == CAUSAL:
        for x in out:
            _check_times(x)
    return out


def build_kff(kspec, X, X2=None):
    """Full ``K_{f,f}`` (or ``K_{f,f2}`` between two input sets), outputs stacked."""
    A = kspec.arrays()
    X = _inputs_list(kspec, X)
    X2 = X if X2 is None else _inputs_list(kspec, X2)
    o1, o2 = _offsets(X), _offsets(X2)
    K = np.zeros((o1[-1], o2[-1]))
    for d1 in range(A.D):
        for d2 in range(A.D):
            if X2 is X and d2 < d1:
                continue
            blk = sum(_ff_block(A, q, d1, X[d1], d2, X2[d2]) for q in range(A.Q))
            K[o1[d1]:o1[d1 + 1], o2[d2]:o2[d2 + 1]] = blk
            if X2 is X and d2 > d1:
                K[o1[d2]:o1[d2 + 1], o2[d1]:o2[d1 + 1]] = blk.T
    return K


def build_kff_block(kspec, d1, X1, d2, X2):
    A = kspec.arrays()
    X1, X2 = as_inputs(X1, kspec.input_dim), as_inputs(X2, kspec.input_dim)
    return sum(_ff_block(A, q, d1, X1, d2, X2) for q in range(A.Q))


def kff_block_vjp(kspec, d1, X1, d2, X2, G, grad):
    A = kspec.arrays()
    X1, X2 = as_inputs(X1, kspec.input_dim), as_inputs(X2, kspec.input_dim)
    for q in range(A.Q):
        _ff_block(A, q, d1, X1, d2, X2, grad=grad, G=G)


def kff_vjp(kspec, X, G, grad):
    """Accumulate ``sum_ij G_ij dK_ij/dtheta`` for the full symmetric ``K_{f,f}``."""
    A = kspec.arrays()
    X = _inputs_list(kspec, X)
    o = _offsets(X)
    for d1 in range(A.D):
        for d2 in range(A.D):
            Gb = G[o[d1]:o[d1 + 1], o[d2]:o[d2 + 1]]
            for q in range(A.Q):
                _ff_block(A, q, d1, X[d1], d2, X[d2], grad=grad, G=Gb)


def build_kff_diag(kspec, X):
    """Diagonal of ``K_{f,f}``; never forms the full matrix."""
    A = kspec.arrays()
    X = _inputs_list(kspec, X)
    return np.concatenate([sum(_ff_diag(A, q, d, X[d]) for q in range(A.Q))
                           for d in range(A.D)])


def kff_diag_vjp(kspec, X, g, grad):
    A = kspec.arrays()
    X = _inputs_list(kspec, X)
    o = _offsets(X)
    for d in range(A.D):
        for q in range(A.Q):
            _ff_diag(A, q, d, X[d], grad=grad, g=g[o[d]:o[d + 1]])


# ---------------------------------------------------------------------------
# Blocks involving inducing functions


def _check_vik(kspec, vik):
    if vik.num_latents != kspec.Q:
        raise DimensionMismatch("need one inducing kernel set per latent")
    if kspec.input_dim is not None and vik.inducing_inputs.shape[1] != kspec.input_dim:
        raise DimensionMismatch("inducing inputs have the wrong dimension")


def _fl_block(A, q, d, X, Z, VS, T2, grad=None, G=None):
    if A.family == CAUSAL:
        tau2 = T2[q, :, 0] + A.L2[q, 0]
        out = _causal.causal_gauss(X[:, 0, None], Z[None, :, 0], A.decay[d], tau2[None, :],
                                   grad=grad is not None)
        if grad is None:
            return A.S[d, q] * out * VS[q][None, :]
        kern, parts = out
        scale = A.S[d, q] * VS[q][None, :]
        H = G * scale
        grad.decay[d] += np.sum(H * parts["D"])
        gtau = np.sum(H * parts["tau2"], axis=0)
        grad.T2[q, :, 0] += gtau
        if not A.white[q]:
            grad.L2[q, 0] += gtau.sum()
        grad.Z[:, 0] += np.sum(H * parts["z"], axis=0)
        GK = G * kern
        grad.S[d, q] += np.sum(GK * VS[q][None, :])
        grad.VS[q] += A.S[d, q] * GK.sum(axis=0)
        return None
    V1 = A.W2[d, q] + A.L2[q]
    N = gauss_block(X, Z, V1, T2[q])
    if grad is None:
        return A.S[d, q] * N * VS[q][None, :]
    GN = G * N
    grad.S[d, q] += np.sum(GN * VS[q][None, :])
    grad.VS[q] += A.S[d, q] * GN.sum(axis=0)
    _, gZ, gV1, gV2 = gauss_block_vjp(X, Z, V1, T2[q], GN * (A.S[d, q] * VS[q][None, :]))
    grad.W2[d, q] += gV1
    if not A.white[q]:
        grad.L2[q] += gV1
    grad.T2[q] += gV2
    grad.Z += gZ
    return None


def build_kflambda(kspec, vik, X):
    """``K_{f,lambda}``: rows are stacked outputs, columns latent-major ``q*K + k``."""
    _check_vik(kspec, vik)
    A = kspec.arrays()
    X = _inputs_list(kspec, X)
    Z = vik.inducing_inputs
    VS, T2 = vik.arrays()
    o = _offsets(X)
    K = vik.K
    out = np.zeros((o[-1], A.Q * K))
    for d in range(A.D):
        for q in range(A.Q):
            out[o[d]:o[d + 1], q * K:(q + 1) * K] = _fl_block(A, q, d, X[d], Z, VS, T2)
    return out


def kflambda_vjp(kspec, vik, X, G, grad):
    A = kspec.arrays()
    X = _inputs_list(kspec, X)
    Z = vik.inducing_inputs
    VS, T2 = vik.arrays()
    o = _offsets(X)
    K = vik.K
    for d in range(A.D):
        for q in range(A.Q):
            _fl_block(A, q, d, X[d], Z, VS, T2, grad=grad,
                      G=G[o[d]:o[d + 1], q * K:(q + 1) * K])


def _latent_var(latent, p):
    return np.zeros(p) if latent.is_white else latent.lengthscale ** 2


def build_klambda(vik, latents):
    """Block-diagonal ``K_{lambda,lambda}``; latents are independent."""
    if vik.num_latents != len(latents):
        raise DimensionMismatch("need one inducing kernel set per latent")
    Z = vik.inducing_inputs
    K, p = Z.shape
    VS, T2 = vik.arrays()
    out = np.zeros((len(latents) * K, len(latents) * K))
    for q, lat in enumerate(latents):
        N = gauss_block(Z, Z, T2[q] + _latent_var(lat, p), T2[q])
        out[q * K:(q + 1) * K, q * K:(q + 1) * K] = N * np.outer(VS[q], VS[q])
    return out


def klambda_vjp(vik, latents, G, grad):
    Z = vik.inducing_inputs
    K, p = Z.shape
    VS, T2 = vik.arrays()
    for q, lat in enumerate(latents):
        Gb = G[q * K:(q + 1) * K, q * K:(q + 1) * K]
        V1 = T2[q] + _latent_var(lat, p)
        N = gauss_block(Z, Z, V1, T2[q])
        GN = Gb * N
        grad.VS[q] += GN @ VS[q] + GN.T @ VS[q]
        gZ1, gZ2, gV1, gV2 = gauss_block_vjp(Z, Z, V1, T2[q], GN * np.outer(VS[q], VS[q]))
        grad.Z += gZ1 + gZ2
        grad.T2[q] += gV1 + gV2
        if not lat.is_white:
            grad.L2[q] += gV1.sum(axis=0)


# ---------------------------------------------------------------------------
# Plain inducing variables u_q(z) (PITC)


def _require_smooth(kspec):
    if any(lat.is_white for lat in kspec.latents):
        raise WhiteNoiseNotSupported(
            "plain inducing variables carry no information about white-noise latents")


def _fu_block(A, q, d, X, Z, grad=None, G=None):
    if A.family == CAUSAL:
        out = _causal.causal_gauss(X[:, 0, None], Z[None, :, 0], A.decay[d], A.L2[q, 0],
                                   grad=grad is not None)
        if grad is None:
            return A.S[d, q] * out
        kern, parts = out
        H = G * A.S[d, q]
        grad.decay[d] += np.sum(H * parts["D"])
        grad.L2[q, 0] += np.sum(H * parts["tau2"])
        grad.Z[:, 0] += np.sum(H * parts["z"], axis=0)
        grad.S[d, q] += np.sum(G * kern)
        return None
    N = gauss_block(X, Z, A.W2[d, q], A.L2[q])
    if grad is None:
        return A.S[d, q] * N
    GN = G * N
    grad.S[d, q] += GN.sum()
    _, gZ, gW, gL = gauss_block_vjp(X, Z, A.W2[d, q], A.L2[q], GN * A.S[d, q])
    grad.W2[d, q] += gW
    grad.L2[q] += gL
    grad.Z += gZ
    return None


def build_kfu(kspec, Z, X):
    """``K_{f,u}`` with ``u_q`` evaluated at the inducing inputs ``Z``."""
    _require_smooth(kspec)
    A = kspec.arrays()
    X = _inputs_list(kspec, X)
    Z = as_inputs(Z, kspec.input_dim)
    o = _offsets(X)
    K = Z.shape[0]
    out = np.zeros((o[-1], A.Q * K))
    for d in range(A.D):
        for q in range(A.Q):
            out[o[d]:o[d + 1], q * K:(q + 1) * K] = _fu_block(A, q, d, X[d], Z)
    return out


def kfu_vjp(kspec, Z, X, G, grad):
    A = kspec.arrays()
    X = _inputs_list(kspec, X)
    Z = as_inputs(Z, kspec.input_dim)
    o = _offsets(X)
    K = Z.shape[0]
    for d in range(A.D):
        for q in range(A.Q):
            _fu_block(A, q, d, X[d], Z, grad=grad, G=G[o[d]:o[d + 1], q * K:(q + 1) * K])


def build_kuu(latents, Z):
    """Block-diagonal ``K_{u,u}`` of smooth latents at ``Z``."""
    Z = as_inputs(Z)
    K, p = Z.shape
    out = np.zeros((len(latents) * K, len(latents) * K))
    for q, lat in enumerate(latents):
        if lat.is_white:
            raise WhiteNoiseNotSupported("white noise has no pointwise covariance")
        out[q * K:(q + 1) * K, q * K:(q + 1) * K] = gauss_block(Z, Z, lat.lengthscale ** 2, np.zeros(p))
    return out


def kuu_vjp(latents, Z, G, grad):
    Z = as_inputs(Z)
    K, p = Z.shape
    for q, lat in enumerate(latents):
        Gb = G[q * K:(q + 1) * K, q * K:(q + 1) * K]
        V = lat.lengthscale ** 2
        N = gauss_block(Z, Z, V, np.zeros(p))
        gZ1, gZ2, gV, _ = gauss_block_vjp(Z, Z, V, np.zeros(p), Gb * N)
        grad.Z += gZ1 + gZ2
        grad.L2[q] += gV
