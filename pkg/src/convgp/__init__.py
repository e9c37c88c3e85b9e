"""Multi-output Gaussian processes built on convolution processes.

Exact inference, the PITC approximation and the variational DTCVAR bound
with inducing kernels, stochastic latent force model kernels, analytic
gradients and a scaled conjugate gradient trainer.
"""

from .data import (
    MetricReport,
    RawTable,
    Standardizer,
    aggregate_replicates,
    encode_categorical,
    metrics,
    read_csv,
    standardize,
    table_to_dataset,
)
from .errors import *  # noqa: F401,F403
from .exact import Dataset, GaussianPredict, NoiseModel, exact_log_marginal, exact_predict
from .gradients import (
    DTCVAR,
    EXACT,
    PITC,
    GradientBundle,
    ModelParams,
    ParamLayout,
    bound_matrix_grads,
    engine_value_and_grads,
    exact_matrix_grads,
    fd_check,
    make_objective,
    pitc_matrix_grads,
)
from .kernels import (
    PER_POINT,
    SHARED,
    KernelMatrixSpec,
    LatentSpec,
    SmoothingKernel,
    VIKConfig,
    VIKEntry,
    build_kff,
    build_kflambda,
    build_kfu,
    build_klambda,
    build_kuu,
    icm_cov,
    latent_cov,
    output_cross_cov,
    output_latent_cross_cov,
    output_vik_cross_cov,
    vik_cov,
)
from .optimize import FitReport, OptimizerConfig, fit, init_params, scg_maximize
from .persist import FittedModel, load_model, save_model
from .quadrature import oracle_suite, quadrature_oracle
from .slfm import (
    SLFMSpec,
    slfm_cov,
    slfm_latent_cross_cov,
    slfm_mean,
    slfm_vik_cov,
    slfm_vik_cross_cov,
)
from .sparse import (
    BoundBreakdown,
    InducingState,
    dtcvar_bound,
    dtcvar_predict,
    optimal_phi,
    pitc_effective_cov,
    pitc_log_marginal,
    pitc_predict,
)

__version__ = "0.1.0"
