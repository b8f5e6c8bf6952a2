"""Exception types shared across the package."""


class WifairError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(WifairError):
    """Invalid configuration or scenario input; message carries the field path."""


class InvalidRateError(ValidationError):
    """A PHY rate outside the profile's supported set."""


class OrderingError(WifairError):
    """Per-station arrays were not ordered by increasing transmission duration."""


class InfeasibleError(WifairError):
    """A requested mapping has no feasible result (e.g. tau = 0 has no window)."""


class ConvergenceError(WifairError):
    """Iterative solver did not reach the requested residual."""

    def __init__(self, message, best_residual=None, best_point=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.best_point = best_point
