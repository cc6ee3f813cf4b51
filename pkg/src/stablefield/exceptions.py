"""Exception types raised by stablefield."""


class StableFieldError(Exception):
    """Base class for all library errors."""


class UnsupportedModelError(StableFieldError, ValueError):
    """The requested operation is not defined for this field model."""


class FactorizationError(StableFieldError):
    """A covariance matrix could not be factorized.

    ``min_eigenvalue`` holds the smallest eigenvalue estimate of the
    offending matrix (after jitter).
    """

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class SingularSystemError(StableFieldError):
    """A linear system for predictor weights is (numerically) singular."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class DegenerateSystemError(StableFieldError):
    """The site kernels are linearly dependent (not full-dimensional)."""


class NonUniqueError(StableFieldError):
    """The optimization problem has no unique solution."""


class ConvergenceError(StableFieldError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class GridCoverageWarning(UserWarning):
    """Kernel mass outside the integration grid exceeds the tolerance."""


class RealizationError(StableFieldError):
    """A benchmark realization failed; ``index`` identifies it."""

    def __init__(self, message, index):
        super().__init__(message)
        self.index = index
