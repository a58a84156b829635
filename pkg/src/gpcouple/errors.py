"""Exception types shared across the package."""


class GpCoupleError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GpCoupleError, ValueError):
    """Invalid parameters, shapes or configuration fields."""


class DomainError(GpCoupleError, ValueError):
    """Input outside the domain of an operation (non-finite values, empty sets)."""


class SingularDesignError(GpCoupleError):
    """Gram matrix could not be factorized, even after jitter escalation.

    Attributes
    ----------
    pairs : list of tuple
        Index pairs of design points that are (numerically) duplicated.
    """

    def __init__(self, message, pairs=()):
        super().__init__(message)
        self.pairs = list(pairs)


class DegeneratePosteriorError(GpCoupleError):
    """A posterior covariance could not be factorized for sampling."""


class DivergenceError(GpCoupleError):
    """Fixed-point iterate became non-finite or exceeded the divergence threshold."""


class NonConvergenceError(GpCoupleError):
    """A required deterministic solve did not converge."""


class HypothesisViolationError(GpCoupleError, ValueError):
    """A bound was requested outside the regime where it holds."""


class ContractionViolationError(HypothesisViolationError):
    """Contraction modulus is not strictly below one."""


class InsufficientDataError(GpCoupleError, ValueError):
    """Too few samples or ladder points for the requested statistic."""
