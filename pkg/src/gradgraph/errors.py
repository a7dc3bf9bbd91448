"""Exception types shared across the package."""


class GradGraphError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GradGraphError):
    """A grid, mask, or experiment configuration is unusable."""


class InvalidInputError(GradGraphError):
    """An input field or matrix violates a documented precondition."""


class OutOfRangeError(GradGraphError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class ConvergenceError(GradGraphError):
    """An iterative solve exhausted its iteration budget.

    Carries the relative-residual history so callers can report it.
    """

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class FunctionalDomainError(InvalidInputError):
    """Eigenvalues left the domain of a Hessian functional.

    ``points`` holds the offending grid multi-indices.
    """

    def __init__(self, message, points):
        super().__init__(message)
        self.points = points
