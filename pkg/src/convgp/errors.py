"""Exception types raised across the package."""


class ConvGPError(Exception):
    """Base class for all package errors."""


class WhiteNoisePointwiseEval(ConvGPError):
    """A white-noise latent has no pointwise covariance."""


class WhiteNoiseNotSupported(ConvGPError):
    """Operation needs smooth latents (plain inducing variables)."""


class FormMismatch(ConvGPError):
    """A smoothing kernel of the wrong form was passed."""


class DimensionMismatch(ConvGPError):
    pass


class NotPositiveDefinite(ConvGPError):
    """Cholesky failed even after jitter escalation."""


class NoConvergence(ConvGPError):
    """Adaptive quadrature hit its refinement limit."""


class NegativeTime(ConvGPError):
    pass


class NonFiniteEvaluation(ConvGPError):
    pass


class NonFiniteObjective(ConvGPError):
    pass


class ConfigError(ConvGPError):
    pass


class DataError(ConvGPError):
    """Input data are malformed or unusable."""


class DegenerateData(DataError):
    pass


class ZeroVariance(DataError):
    pass


class EmptyTestSet(DataError):
    pass


class UnknownCategory(DataError):
    pass
