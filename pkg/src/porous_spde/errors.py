"""Exception hierarchy shared by the solver, the ensemble runner and the CLI."""


class SPDEError(Exception):
    """Base class for all errors raised by :mod:`porous_spde`."""


class ConfigurationError(SPDEError, ValueError):
    """Invalid sizes, parameters or mismatched inputs."""


class DomainError(SPDEError, ValueError):
    """A parameter lies outside the range where an operation is defined."""


class ExtrapolationError(DomainError):
    """A tabulated nonlinearity was queried outside its table."""


class NumericalError(SPDEError, ArithmeticError):
    """NaN or Inf appeared in an iterate."""


class SolverError(SPDEError, RuntimeError):
    """An iterative solve did not converge.

    ``residual`` carries the last residual norm reached.
    """

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class StepError(SolverError):
    """A time step failed; ``step`` is the index of the failing step."""

    def __init__(self, message: str, step: int = -1, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message, residual=residual, iterations=iterations)
        self.step = step


class InvalidExperimentError(SPDEError):
    """The requested experiment violates its own preconditions."""
