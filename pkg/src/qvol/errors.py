"""Exception hierarchy and warning categories shared across the package.

Two failure families matter to callers: bad input (rejected data, domain
violations) and numerical breakdown (solvers that do not converge, singular
linear algebra).  The CLI maps them to exit codes 1 and 2 respectively, and
the HTTP service maps them to status 400 and 500.
"""

__all__ = [
    "QvolError",
    "InvalidInputError",
    "DegenerateDataError",
    "NumericalError",
    "NonConvergenceError",
    "SingularMatrixError",
    "ThresholdAboveTopVolumeWarning",
]


class QvolError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(QvolError, ValueError):
    """User-supplied data or arguments violate a documented precondition."""


class DegenerateDataError(InvalidInputError):
    """Data is syntactically fine but carries no usable signal
    (e.g. all observed volumes identical, or too few distinct bins)."""


class NumericalError(QvolError, ArithmeticError):
    """A numerical routine failed in a way that is not the caller's fault."""


class NonConvergenceError(NumericalError):
    """A solver exhausted its iteration budget.

    ``best_params`` holds the best point seen so far, so batch drivers can
    decide to keep a flagged result instead of discarding the replicate.
    """

    def __init__(self, message, best_params=None, best_value=None):
        super().__init__(message)
        self.best_params = best_params
        self.best_value = best_value


class SingularMatrixError(NumericalError):
    """Normal equations are rank deficient; standard errors are undefined."""


class ThresholdAboveTopVolumeWarning(UserWarning):
    """Emitted when an estimator is queried above the fitted intercept.

    The closed-form estimate then falls below one query.  Sensitivity sweeps
    legitimately probe this region, so it is a warning, not an error.
    """
