"""Exception hierarchy.

Every error raised by the numerical services derives from ``RhgcError`` and carries the
diagnostic values that identify the failure as attributes.
"""
from typing import Optional


class RhgcError(Exception):
    """Root of all library errors."""


class DimensionMismatch(RhgcError, ValueError):
    def __init__(self, message: str):
        super().__init__(message)


# Canonical form

class CanonicalFormError(RhgcError):
    """Base for controllability and canonical-form failures."""


class NotCanonical(CanonicalFormError):
    def __init__(self, row: int, col: int, matrix: str = "A", value: Optional[float] = None):
        self.row = row
        self.col = col
        self.matrix = matrix
        self.value = value
        detail = f" (value {value:.3g})" if value is not None else ""
        super().__init__(f"{matrix}[{row}, {col}] violates the canonical pattern{detail}")


class NotControllable(CanonicalFormError):
    def __init__(self, rank_found: int, n: int):
        self.rank_found = rank_found
        self.n = n
        super().__init__(f"Controllability matrix has rank {rank_found}, expected {n}")


class IllConditioned(CanonicalFormError):
    def __init__(self, condition_estimate: float):
        self.condition_estimate = condition_estimate
        super().__init__(f"Selected basis is numerically singular (condition {condition_estimate:.3e})")


class SingularTransform(CanonicalFormError):
    def __init__(self, which: str):
        self.which = which
        super().__init__(f"Transform {which} is singular")


# Reformulation

class ReformulationError(RhgcError):
    """Base for z-space reparameterization failures."""


class WindowTooShort(ReformulationError):
    def __init__(self, required: int, given: int):
        self.required = required
        self.given = given
        super().__init__(f"Window holds {given} vectors, {required} required")


class StageOutOfRange(ReformulationError):
    def __init__(self, stage: int, low: int, high: int):
        self.stage = stage
        self.low = low
        self.high = high
        super().__init__(f"Stage {stage} outside [{low}, {high}]")


class LengthMismatch(ReformulationError):
    def __init__(self, expected: int, given: int):
        self.expected = expected
        self.given = given
        super().__init__(f"Path length {given} does not match horizon {expected}")


class NonPositiveConstant(ReformulationError, ValueError):
    def __init__(self, name: str, value: float):
        self.name = name
        self.value = value
        super().__init__(f"Constant {name} must be positive, got {value}")


# Online algorithms

class AlgorithmError(RhgcError):
    """Base for online controller failures."""


class InvalidConditionNumber(AlgorithmError, ValueError):
    def __init__(self, zeta: float):
        self.zeta = zeta
        super().__init__(f"Condition number must be >= 1, got {zeta}")


class SteadyStateSolveFailed(AlgorithmError):
    def __init__(self, residual: float):
        self.residual = residual
        super().__init__(f"Steady-state solve stopped with gradient norm {residual:.3e}")


class OracleInformationViolation(AlgorithmError):
    def __init__(self, stage: int, limit: int):
        self.stage = stage
        self.limit = limit
        super().__init__(f"Stage {stage} cost read while only stages <= {limit} are revealed")


class NonFiniteIterate(AlgorithmError):
    def __init__(self, stage: int, iteration: int):
        self.stage = stage
        self.iteration = iteration
        super().__init__(f"Non-finite iterate at stage {stage}, iteration {iteration}")


class NegativeRegretBeyondTolerance(AlgorithmError):
    def __init__(self, regret: float, tolerance: float):
        self.regret = regret
        self.tolerance = tolerance
        super().__init__(
            f"Regret {regret:.3e} below -{tolerance:.1e}; the offline optimum is not optimal"
        )


# Linear-quadratic tracking

class LqtError(RhgcError):
    """Base for Riccati and dynamic-programming failures."""


class NoConvergence(LqtError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"No convergence after {iterations} iterations (residual {residual:.3e})")


class SingularInnerMatrix(LqtError):
    def __init__(self, stage: int, residual: float = float("nan")):
        self.stage = stage
        self.residual = residual
        super().__init__(f"Inner matrix singular at stage {stage} (residual {residual:.3e})")


class SingularReducedHessian(LqtError):
    def __init__(self, residual: float = float("nan")):
        self.residual = residual
        super().__init__(f"Reduced steady-state Hessian is singular (residual {residual:.3e})")


# Lower-bound family

class InadmissibleParameters(RhgcError, ValueError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"Inadmissible parameters: {reason}")


class NonIntegerHorizonRatio(RhgcError, ValueError):
    def __init__(self, N: int, n: int):
        self.N = N
        self.n = n
        super().__init__(f"N/n must be an integer, got N={N}, n={n}")


# Harness

class ConfigError(RhgcError, ValueError):
    def __init__(self, path: str, field: str, message: str = ""):
        self.path = path
        self.field = field
        suffix = f": {message}" if message else ""
        super().__init__(f"Invalid config {path} at '{field}'{suffix}")
