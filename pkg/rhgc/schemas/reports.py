from typing import List, Optional
from pydantic import BaseModel, Field

# Regret of one online run against the offline optimum
class RegretReport(BaseModel):
    algorithm: str
    oracle: str
    W: int = Field(ge=1)
    K: int = Field(ge=0)
    J_online: float
    J_star: float
    regret: float
    zeta: float
    # Multiplier of Regret(oracle) in the guaranteed bound, NaN when none is known
    bound_factor: float
    gradient_evaluations: int = Field(ge=0)

# One row of a sweep table
class SweepRow(BaseModel):
    algorithm: str
    W: int = Field(ge=1)
    K: int = Field(ge=0)
    seed: int
    J_online: float
    J_star: float
    regret: float
    bound_factor: float
    gradient_evaluations: int = Field(ge=0)
    wall_time: float = 0.0

# Outcome of a single numeric check
class CheckResult(BaseModel):
    name: str
    passed: bool
    skipped: bool = False
    detail: str = ""
    measured: Optional[float] = None
    threshold: Optional[float] = None

# Collection of checks, e.g. a verification suite or a structural report on one instance
class VerificationReport(BaseModel):
    title: str
    checks: List[CheckResult] = []

    @property
    def passed(self) -> bool:
        return all(check.passed or check.skipped for check in self.checks)

    def add(self, name: str, passed: bool, detail: str = "", measured: Optional[float] = None,
            threshold: Optional[float] = None) -> CheckResult:
        check = CheckResult(name=name, passed=bool(passed), detail=detail,
                            measured=measured, threshold=threshold)
        self.checks.append(check)
        return check

    def skip(self, name: str, reason: str) -> CheckResult:
        check = CheckResult(name=name, passed=False, skipped=True, detail=reason)
        self.checks.append(check)
        return check

# Canonical-form report printed by the transform command
class CanonicalReport(BaseModel):
    A_hat: List[List[float]]
    B_hat: List[List[float]]
    S_x: List[List[float]]
    S_u: List[List[float]]
    actuated_rows: List[int]
    p_list: List[int]
    p: int
