"""Exception hierarchy.

Every class carries an ``exit_code`` so the command line front end can map
failures to distinct process statuses without a lookup table of its own.
"""

from __future__ import annotations


class FinslerError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(FinslerError):
    exit_code = 2


class ExpressionParseError(FinslerError):
    """Syntax or identifier error in a field expression."""

    exit_code = 3

    def __init__(self, message: str, line: int = 1, column: int = 1, source: str = ""):
        self.line = line
        self.column = column
        self.source = source
        super().__init__(f"line {line}, column {column}: {message}")


class DimensionError(FinslerError):
    exit_code = 4


class FieldEvaluationError(FinslerError):
    """A field component could not be evaluated (non-finite value, bad domain)."""

    exit_code = 5

    def __init__(self, message: str, x=None):
        self.x = None if x is None else [float(v) for v in x]
        if self.x is not None:
            message = f"{message} at x={self.x}"
        super().__init__(message)


class RandersConditionError(FinslerError):
    """The one-form is not strictly shorter than one in the Riemannian norm."""

    exit_code = 6

    def __init__(self, message: str, norm: float | None = None, x=None):
        self.norm = norm
        self.x = None if x is None else [float(v) for v in x]
        super().__init__(message)


class StrongConvexityError(FinslerError):
    """Fundamental tensor (or an averaged metric) is not positive definite."""

    exit_code = 7


class ConvergenceError(FinslerError):
    exit_code = 8

    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        super().__init__(message)


class OperatorError(FinslerError):
    """Precondition violated by a matrix operator (non-Hermitian, non-commuting...)."""

    exit_code = 9


class MissingArtifactsError(FinslerError):
    exit_code = 10


class CheckFailedError(FinslerError):
    """A numerical invariant was evaluated and did not hold."""

    exit_code = 11
