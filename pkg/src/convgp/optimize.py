"""Scaled conjugate gradient training and parameter initialisation.

The optimiser follows Moller's scaled conjugate gradient algorithm (as in
the Netlab toolbox), written for maximisation.  A trial step is accepted
only when it does not lower the objective, so the accepted objective
sequence is non-decreasing by construction.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.spatial.distance import pdist

from .errors import ConvGPError, DegenerateData, NonFiniteObjective
from .gradients import (
    DTCVAR,
    EXACT,
    PARAM_CLASSES,
    PITC,
    VARIATIONAL_CLASSES,
    ModelParams,
    ParamLayout,
    make_objective,
)
from .exact import NoiseModel
from .kernels import (
    CAUSAL,
    DIRAC,
    GAUSSIAN,
    PER_POINT,
    KernelMatrixSpec,
    LatentSpec,
    SmoothingKernel,
    VIKConfig,
    VIKEntry,
    build_kff_diag,
)

# termination reasons
GRADIENT = "gradient_norm"
OBJECTIVE = "objective_change"
MAX_ITERS = "max_iters"
STALL = "line_search_stall"


@dataclass
class OptimizerConfig:
    """Settings for :func:`scg_maximize`.

    ``initial_damping`` is the starting SCG scale ``lambda``; the search
    direction is reset to the gradient every ``restart`` successful steps
    (default: the number of parameters).  Convergence on the objective
    needs both ``|f_new - f_old| < objective_tol`` and a step smaller than
    ``step_tol`` in every coordinate.
    """

    max_iters: int = 1000
    gradient_tol: float = 1e-6
    objective_tol: float = 1e-9
    step_tol: float = 1e-6
    initial_damping: float = 1e-6
    restart: int = None
    trace: bool = True
    max_failures: int = 60

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        for name in ("gradient_tol", "objective_tol", "step_tol", "initial_damping"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class FitReport:
    final_objective: float
    iterations: int
    termination: str
    trace: list = field(default_factory=list)
    evaluations: int = 0


def scg_maximize(f, p0, cfg=None):
    """Maximise ``f`` by scaled conjugate gradients.

    Parameters
    ----------
    f : callable
        ``f(p) -> (value, gradient)``.
    p0 : array_like
        Starting point.
    cfg : OptimizerConfig, optional

    Returns
    -------
    p : ndarray
    report : FitReport

    Raises
    ------
    NonFiniteObjective
        If the objective or its gradient is not finite at ``p0``.
    """
    cfg = cfg or OptimizerConfig()
    x = np.array(p0, dtype=float)
    n = x.size
    restart = cfg.restart or max(n, 1)
    sigma0, beta_min, beta_max = 1e-4, 1e-15, 1e100
    evals = 0

    # minimise the negation internally
    def neg(p):
        nonlocal evals
        evals += 1
        try:
            # rejected trial points may overflow; they are screened below
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                v, g = f(p)
        except (ConvGPError, ValueError, FloatingPointError, np.linalg.LinAlgError):
            return np.inf, None
        v = -float(v)
        g = -np.asarray(g, dtype=float)
        if not np.isfinite(v) or not np.all(np.isfinite(g)):
            return np.inf, None
        return v, g

    fold, gnew = neg(x)
    if not np.isfinite(fold):
        raise NonFiniteObjective("objective is not finite at the starting point")
    trace = [-fold] if cfg.trace else []
    if n == 0:
        return x, FitReport(-fold, 0, GRADIENT, trace, evals)
    gold = gnew
    d = -gnew
    success, nsuccess, failures = True, 0, 0
    beta = cfg.initial_damping
    reason, it = MAX_ITERS, 0
    mu = kappa = theta = 0.0
    while it < cfg.max_iters:
        if np.sqrt(gnew @ gnew) < cfg.gradient_tol:
            reason = GRADIENT
            break
        it += 1
        if success:
            mu = d @ gnew
            if mu >= 0:
                d = -gnew
                mu = d @ gnew
            kappa = d @ d
            # the probe step has fixed length sigma0, so only an exactly vanishing direction stops
            if kappa < np.finfo(float).tiny:
                reason = GRADIENT
                break
            sigma = sigma0 / np.sqrt(kappa)
            _, gplus = neg(x + sigma * d)
            if gplus is None:
                theta = 0.0
            else:
                theta = d @ (gplus - gnew) / sigma
        delta = theta + beta * kappa
        if delta <= 0:
            delta = beta * kappa
            beta = beta - theta / kappa
        alpha = -mu / delta
        step = alpha * d
        xnew = x + step
        fnew, gtrial = neg(xnew)
        Delta = 2.0 * (fnew - fold) / (alpha * mu) if np.isfinite(fnew) else -1.0
        success = Delta >= 0 and fnew <= fold
        if success:
            failures = 0
            nsuccess += 1
            x = xnew
            converged = (abs(fnew - fold) < cfg.objective_tol
                         and np.max(np.abs(step)) < cfg.step_tol)
            fold = fnew
            gold, gnew = gnew, gtrial
        else:
            failures += 1
        if cfg.trace:
            trace.append(-fold)
        if success and converged:
            reason = OBJECTIVE
            break
        if Delta < 0.25:
            beta = min(4.0 * beta, beta_max)
        if Delta > 0.75:
            beta = max(0.5 * beta, beta_min)
        if beta >= beta_max or failures >= cfg.max_failures:
            reason = STALL
            break
        if nsuccess == restart:
            d = -gnew
            nsuccess = 0
        elif success:
            gamma = (gold - gnew) @ gnew / mu
            d = gamma * d - gnew
    return x, FitReport(-fold, it, reason, trace, evals)


# ---------------------------------------------------------------------------
# Initialisation


def _median_distance(X):
    if len(X) < 2:
        return 1.0
    dist = pdist(X)
    dist = dist[dist > 0]
    return float(np.median(dist)) if dist.size else 1.0


def choose_inducing(X, K, seed=0):
    """``K`` inducing inputs by k-means (k-means++ start), deterministic in ``seed``."""
    X = np.asarray(X, dtype=float)
    uniq = np.unique(X, axis=0)
    if K >= len(uniq):
        # every distinct input, topped up with jittered copies
        rng = np.random.default_rng(seed)
        extra = uniq[rng.integers(0, len(uniq), K - len(uniq))]
        spread = _median_distance(uniq) * 1e-2
        return np.vstack([uniq, extra + rng.normal(scale=spread, size=extra.shape)])
    with warnings.catch_warnings():
        # an emptied cluster keeps its previous centre
        warnings.simplefilter("ignore")
        Z, _ = kmeans2(X, K, minit="++", seed=np.random.default_rng(seed), missing="warn")
    return Z


def init_params(data, template, num_inducing=None, seed=0):
    """Data-driven starting values with the structure of ``template``.

    Widths and lengthscales start at the median pairwise input distance
    (1 when all inputs coincide).  Noise variances start at a tenth of each
    output's variance and sensitivities are scaled so that the prior
    variance of each output matches the remaining nine tenths.  Inducing
    inputs come from k-means; inducing-kernel widths start at the median
    nearest-neighbour spacing of ``Z``.

    Parameters
    ----------
    data : Dataset
    template : ModelParams
        Latent kinds, smoothing forms and the inducing-kernel mode are kept;
        all values are replaced.
    num_inducing : int, optional
        Number of inducing inputs (defaults to the template's).
    seed : int

    Raises
    ------
    DegenerateData
        If some output has fewer than two observations.
    """
    if any(n < 2 for n in data.sizes):
        raise DegenerateData("every output needs at least two observations")
    rng = np.random.default_rng(seed)
    ks = template.kspec
    D, Q, p = ks.D, ks.Q, ks.input_dim
    X = data.inputs
    h = _median_distance(X)
    var_y = np.array([np.var(y) for y in data.targets])
    var_y = np.where(var_y > 0, var_y, 1.0)

    latents = [lat if lat.is_white else LatentSpec.squared_exp(np.full(p, h)) for lat in ks.latents]
    f0 = None
    if ks.family == CAUSAL:
        f0 = np.array([y[np.argmin(data.X(d)[:, 0])] for d, y in enumerate(data.targets)])
    # unit-magnitude sensitivities with random size, then rescale per output
    mag = rng.uniform(0.5, 1.0, size=(D, Q))
    rows = []
    for d in range(D):
        row = []
        for q in range(Q):
            g = ks.smoothing[d][q]
            if g.form == GAUSSIAN:
                row.append(SmoothingKernel.gaussian(mag[d, q], np.full(p, h)))
            elif g.form == DIRAC:
                row.append(SmoothingKernel.dirac(mag[d, q]))
            else:
                row.append(SmoothingKernel.causal(mag[d, q], 1.0))
        rows.append(row)
    trial = KernelMatrixSpec(latents, rows, f0)
    prior = build_kff_diag(trial, [data.X(d) for d in range(D)])
    offs = np.concatenate([[0], np.cumsum(data.sizes)])
    scale = np.array([np.sqrt(0.9 * var_y[d] / max(prior[offs[d]:offs[d + 1]].mean(), 1e-300))
                      for d in range(D)])
    for d in range(D):
        rows[d] = [_rescaled(g, scale[d]) for g in rows[d]]
    kspec = KernelMatrixSpec(latents, rows, f0)
    noise = NoiseModel(0.1 * var_y)

    out = ModelParams(kspec, noise)
    if template.vik is not None or template.Z is not None:
        K = num_inducing or (template.vik.K if template.vik is not None
                             else np.atleast_2d(template.Z).shape[0])
        Z = choose_inducing(X, K, seed)
        out.Z = Z.copy()
        if template.vik is not None:
            out.vik = _vik_at(Z, Q, template.vik.mode)
    return out


def _rescaled(g, c):
    if g.form == GAUSSIAN:
        return SmoothingKernel.gaussian(g.sensitivity * c, g.widths)
    if g.form == DIRAC:
        return SmoothingKernel.dirac(g.sensitivity * c)
    return SmoothingKernel.causal(g.sensitivity * c, g.decay)


def _vik_at(Z, Q, mode):
    if len(Z) > 1:
        dist = np.sqrt(((Z[:, None, :] - Z[None, :, :]) ** 2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        nn = dist.min(axis=1)
        nn = nn[nn > 0]
        w = float(np.median(nn)) if nn.size else 1.0
    else:
        w = 1.0
    widths = np.full(Z.shape[1], w)
    if mode == PER_POINT:
        return VIKConfig(Z, [[VIKEntry(1.0, widths) for _ in range(len(Z))] for _ in range(Q)],
                         PER_POINT)
    return VIKConfig(Z, [VIKEntry(1.0, widths) for _ in range(Q)])


# ---------------------------------------------------------------------------
# Fitting


def fit(data, params, engine=DTCVAR, cfg=None, fixed=(), schedule="joint", rounds=3):
    """Optimise ``params`` for one engine.

    ``schedule="alternating"`` runs ``rounds`` passes that first update the
    variational quantities (``Z`` and the inducing kernels) and then the
    model hyperparameters; the default updates everything jointly.

    Returns
    -------
    params : ModelParams
    report : FitReport
        For alternating fits the traces of all phases are concatenated.
    """
    cfg = cfg or OptimizerConfig()
    if schedule == "joint":
        phases = [tuple(fixed)]
    elif schedule == "alternating":
        model = tuple(c for c in PARAM_CLASSES if c not in VARIATIONAL_CLASSES)
        phases = [tuple(set(fixed) | set(model)), tuple(set(fixed) | set(VARIATIONAL_CLASSES))]
        phases = phases * rounds
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    total = None
    for fx in phases:
        layout = ParamLayout(params, engine, fixed=fx)
        f = make_objective(engine, data, layout)
        theta, rep = scg_maximize(f, layout.pack(), cfg)
        params = layout.unpack(theta)
        if total is None:
            total = rep
        else:
            total = FitReport(rep.final_objective, total.iterations + rep.iterations,
                              rep.termination, total.trace + rep.trace[1:],
                              total.evaluations + rep.evaluations)
    return params, total


__all__ = [
    "OptimizerConfig", "FitReport", "scg_maximize", "init_params", "choose_inducing", "fit",
    "GRADIENT", "OBJECTIVE", "MAX_ITERS", "STALL", "EXACT", "PITC", "DTCVAR",
]
