"""Exception hierarchy shared by all modules."""


class AnisocritError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AnisocritError, ValueError):
    """Invalid domain, coefficient or run configuration."""


class ValidationError(AnisocritError, ValueError):
    """Input data violates a documented invariant."""


class SolverError(AnisocritError, RuntimeError):
    """An iterative solver did not reach its tolerance.

    ``iterations`` and ``residual`` describe the attained state; ``partial``
    optionally carries the best partial result.
    """

    def __init__(self, message, iterations=None, residual=None, partial=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.partial = partial


class SpectrumError(AnisocritError, ValueError):
    """Requested lambda is not bracketed by the computed eigenvalues."""
