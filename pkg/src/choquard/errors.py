"""Exception hierarchy shared across the toolkit."""


class ChoquardError(Exception):
    """Base class for all toolkit errors."""


class DomainError(ChoquardError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(ChoquardError, ValueError):
    """Invalid configuration, grid parameters or existence-regime violation."""


class DataError(ChoquardError, ValueError):
    """Malformed numerical data (NaN, wrong length, empty scan...)."""


class GridMismatchError(DataError):
    """A field or kernel was built on a different grid."""


class UnsupportedParameterError(ChoquardError, ValueError):
    """Parameter is valid mathematically but not supported numerically."""


class DegenerateInputError(ChoquardError, ValueError):
    """The zero field (or an equivalent) was passed where u != 0 is required."""


class BracketError(ChoquardError, RuntimeError):
    """A root could not be bracketed."""


class InfeasibleError(ChoquardError, RuntimeError):
    """The constraint H(u_sigma) = 1 has no positive solution."""


class ConvergenceError(ChoquardError, RuntimeError):
    """Iterative solver hit its iteration cap."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StagnationError(ConvergenceError):
    """Descent step could not decrease the objective."""


class ConsistencyError(ChoquardError, RuntimeError):
    """Two independent computations of the same quantity disagree."""
