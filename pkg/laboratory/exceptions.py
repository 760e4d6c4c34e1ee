"""Error hierarchy for the laboratory.

Library code raises these; the ``lab`` management command and the HTTP views
translate them into exit codes and status codes.
"""
from typing import Optional, Sequence


class LaboratoryError(Exception):
    """Base class for every error raised by the laboratory."""

    #: exit code used by the ``lab`` command when the error escapes a run
    exit_code = 1


class ExpressionParseError(LaboratoryError, ValueError):
    exit_code = 2


class DimensionMismatchError(LaboratoryError, ValueError):
    exit_code = 2


class ExpressionDomainError(LaboratoryError, ArithmeticError):
    """An expression was evaluated outside of its domain."""

    def __init__(self, message: str, point: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.point = None if point is None else [float(v) for v in point]


class GroupLawError(LaboratoryError, ValueError):
    exit_code = 2


class MonteCarloError(LaboratoryError):
    def __init__(self, message: str, estimate: float = float('nan'), stderr: float = float('nan')):
        super().__init__(message)
        self.estimate = estimate
        self.stderr = stderr


class FitError(LaboratoryError, ValueError):
    pass


class QuadratureError(LaboratoryError):
    pass


class AssemblyError(LaboratoryError):
    pass


class SolverError(LaboratoryError):
    def __init__(self, message: str, residual: float = float('nan'), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class PreconditionError(LaboratoryError, ValueError):
    exit_code = 2
