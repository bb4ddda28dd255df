"""Exception types shared across the package."""


class ElamlError(Exception):
    """Base class for all package errors."""


class DataError(ElamlError):
    """Invalid or inconsistent input data.

    `items` holds one message per offending row/column so callers can report
    every problem at once.
    """

    def __init__(self, message, items=None):
        super().__init__(message)
        self.items = list(items) if items else []

    def __str__(self):
        base = super().__str__()
        if self.items:
            return base + "\n  - " + "\n  - ".join(self.items)
        return base


class ModelError(ElamlError):
    """Model evaluation failed (non-finite likelihood, bad covariance, ...)."""


class ModeError(ElamlError):
    """Inner optimization (latent or joint mode) failed.

    Carries the last iterate so callers can inspect or restart.
    """

    def __init__(self, message, last_iterate=None, iterations=0):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations


class EstimateError(ElamlError):
    """A Monte Carlo estimate could not be formed (e.g. all ratios -inf)."""


class FitError(ElamlError):
    """Outer optimization failed in a way that has no usable FitResult."""


class StudyError(ElamlError):
    """Simulation study failed (too many replicate failures)."""

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = list(failures) if failures else []
