"""
Online controllers with W-step lookahead: the FOSS initialization and the receding-horizon
gradient methods RHGD, RHAG and RHTM.
"""
from dataclasses import dataclass
from typing import Optional, Protocol, Tuple
import logging
import math

import numpy as np

from rhgc.core.config import settings
from rhgc.core.errors import (
    InvalidConditionNumber,
    NegativeRegretBeyondTolerance,
    SingularReducedHessian,
    SteadyStateSolveFailed,
)
from rhgc.schemas.reports import RegretReport
from rhgc.services.control.canonical import CanonicalSystem
from rhgc.services.control.costs import QuadraticCost, StageCost, WindowedCostProvider
from rhgc.services.control.engine import MomentumRule, RecedingHorizonEngine
from rhgc.services.control.linalg import checked_solve, spectral_norm
from rhgc.services.control.reformulate import Trajectory, ZCost, ZPath, partial_gradient

# Configure logging
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepSizes:
    """Step sizes guaranteeing the regret bounds of RHGD and RHTM."""
    gamma_g: float
    gamma_c: float
    gamma_omega: float
    gamma_y: float
    gamma_z: float
    phi: float

    @property
    def gradient_rule(self) -> MomentumRule:
        return MomentumRule.gradient_descent(self.gamma_g)

    @property
    def triple_momentum_rule(self) -> MomentumRule:
        return MomentumRule(step=self.gamma_c, omega=self.gamma_omega, y=self.gamma_y, z=self.gamma_z)


def compute_stepsizes(l_c: float, zeta: float) -> StepSizes:
    """
    Step sizes from the smoothness constant and condition number of C(z).

    Args:
        l_c: Smoothness constant
        zeta: Condition number l_c / mu_c

    Returns:
        StepSizes with phi = 1 - 1/sqrt(zeta)
    """
    if not zeta >= 1:
        raise InvalidConditionNumber(zeta)
    if not l_c > 0:
        raise InvalidConditionNumber(zeta)
    phi = 1.0 - 1.0 / math.sqrt(zeta)
    return StepSizes(
        gamma_g=1.0 / l_c,
        gamma_c=(1.0 + phi) / l_c,
        gamma_omega=phi ** 2 / (2.0 - phi),
        gamma_y=phi ** 2 / ((1.0 + phi) * (2.0 - phi)),
        gamma_z=phi ** 2 / (1.0 - phi ** 2),
        phi=phi,
    )


def nesterov_rule(l_c: float, zeta: float) -> MomentumRule:
    """Nesterov's accelerated gradient written as a triple-momentum rule."""
    if not zeta >= 1:
        raise InvalidConditionNumber(zeta)
    momentum = (math.sqrt(zeta) - 1.0) / (math.sqrt(zeta) + 1.0)
    return MomentumRule.nesterov(1.0 / l_c, momentum)


def rhgd_bound_factor(zeta: float, K: int) -> float:
    """Regret(RHGD) <= factor * Regret(initialization)."""
    return zeta * ((zeta - 1.0) / zeta) ** K


def rhtm_bound_factor(zeta: float, K: int) -> float:
    """Regret(RHTM) <= factor * Regret(initialization)."""
    return zeta ** 2 * ((math.sqrt(zeta) - 1.0) / math.sqrt(zeta)) ** (2 * K)


def acceleration_threshold(zeta: float, max_K: int = 1000) -> int:
    """
    Smallest K at which the RHTM bound factor is no larger than the RHGD one.

    Below it the extrapolated triple-momentum output can overshoot and RHTM is not expected to
    beat the unaccelerated methods.
    """
    if not zeta >= 1:
        raise InvalidConditionNumber(zeta)
    for K in range(max_K + 1):
        if rhtm_bound_factor(zeta, K) <= rhgd_bound_factor(zeta, K):
            return K
    return max_K


def bound_factor(algorithm: str, zeta: float, K: int) -> float:
    if algorithm == "foss":
        return 1.0
    if algorithm == "rhgd":
        return rhgd_bound_factor(zeta, K)
    if algorithm == "rhtm":
        return rhtm_bound_factor(zeta, K)
    # RHAG and the MPC baselines carry no guarantee of this form
    return float("nan")


def _steady_state_maps(canonical: CanonicalSystem) -> Tuple[np.ndarray, np.ndarray]:
    """F_1 and G = I - A(I,:) F_1: any steady state is (F_1 z, G z)."""
    F_1 = canonical.replication
    G = np.eye(canonical.m) - canonical.A_I @ F_1
    return F_1, G


def optimal_steady_state(f: StageCost, g: StageCost, canonical: CanonicalSystem) -> np.ndarray:
    """
    argmin over steady states (x, u) of f(x) + g(u), returned as z = x(I).

    Quadratic pairs use the closed form; other convex pairs are solved by gradient descent on
    z -> f(F_1 z) + g(G z).

    Args:
        f: State cost
        g: Control cost
        canonical: Canonical system

    Returns:
        The optimal steady-state z
    """
    F_1, G = _steady_state_maps(canonical)
    if isinstance(f, QuadraticCost) and isinstance(g, QuadraticCost):
        hessian = F_1.T @ f.weight @ F_1 + G.T @ g.weight @ G
        rhs = F_1.T @ f.weight @ f.target + G.T @ g.weight @ g.target
        return checked_solve(hessian, rhs, SingularReducedHessian, assume_a="pos")

    step = 1.0 / (f.smoothness * spectral_norm(F_1) ** 2 + g.smoothness * spectral_norm(G) ** 2)
    start = f.minimizer
    z = np.zeros(canonical.m) if start is None else start[list(canonical.indices)]
    norm = float("inf")
    for _ in range(settings.STEADY_STATE_MAX_ITERATIONS):
        grad = F_1.T @ f.gradient(F_1 @ z) + G.T @ g.gradient(G @ z)
        norm = float(np.linalg.norm(grad))
        if norm <= settings.STEADY_STATE_TOLERANCE:
            break
        z = z - step * grad
    if norm > 1e-6 or not np.isfinite(norm):
        logger.error(f"Steady-state gradient descent stopped at gradient norm {norm:.3e}")
        raise SteadyStateSolveFailed(norm)
    if norm > settings.STEADY_STATE_TOLERANCE:
        logger.warning(f"Steady-state solve reached iteration cap with gradient norm {norm:.3e}")
    return z


class InitializationOracle(Protocol):
    name: str

    def __call__(self, provider: WindowedCostProvider, stage: int, canonical: CanonicalSystem) -> np.ndarray:
        ...


class FossOracle:
    """
    Follow the optimal steady state: z_stage(0) is the optimal steady state of the stage
    cost pair (f_{stage-1}, g_{stage-1}), the newest pair in the window.
    """

    name = "foss"

    def __call__(self, provider: WindowedCostProvider, stage: int, canonical: CanonicalSystem) -> np.ndarray:
        return foss_oracle(provider, stage, canonical)


def foss_oracle(provider: WindowedCostProvider, stage: int, canonical: CanonicalSystem) -> np.ndarray:
    s = stage - 1
    return optimal_steady_state(provider.state_cost(s), provider.control_cost(s), canonical)


@dataclass
class OnlineRun:
    """Result of one online run in canonical coordinates."""
    algorithm: str
    trajectory: Trajectory
    z_initial: ZPath
    z_final: ZPath
    K: int
    W: int
    oracle_name: str
    gradient_evaluations: int
    # Largest (stage read - stage revealed) over the run, <= 0 when gating held
    lookahead_excess: float = float("-inf")

    @property
    def cost(self) -> float:
        return self.trajectory.cost


def run_receding_horizon(
    zcost: ZCost,
    W: int,
    rule: MomentumRule,
    algorithm: str,
    oracle: Optional[InitializationOracle] = None,
) -> OnlineRun:
    """
    The online loop shared by RHGD, RHAG and RHTM.

    For t = 1-W..N-1: reveal the costs up to stage t+W-1, initialize z_{t+W}(0) by the oracle,
    refine z_{t+W-jp} at iteration j for j = 1..K, and from t = 0 on apply
    u_t = z_{t+1}(K) - A(I,:) x_t.

    Args:
        zcost: Objective in canonical coordinates
        W: Lookahead window
        rule: Momentum rule of the inner iterations
        algorithm: Name recorded on the run
        oracle: Initialization oracle, FOSS by default

    Returns:
        OnlineRun with the realized trajectory
    """
    oracle = FossOracle() if oracle is None else oracle
    canonical, N, p = zcost.canonical, zcost.N, zcost.p
    provider = WindowedCostProvider(zcost.costs)

    def local_gradient(stage: int, local: np.ndarray) -> np.ndarray:
        return partial_gradient(stage, local, provider, canonical, N)

    engine = RecedingHorizonEngine(
        N=N, p=p, m=canonical.m, W=W, rule=rule,
        local_gradient=local_gradient,
        history=zcost.history,
        evaluations_per_gradient=2 * p + 1,
    )
    logger.debug(f"{algorithm}: N={N}, W={W}, K={engine.K}, oracle={oracle.name}")

    x = provider.x0.copy()
    states = [x]
    controls = []
    for t in range(1 - W, N):
        provider.reveal(t + W - 1)
        stage = t + W
        if stage <= N:
            engine.initialize(stage, oracle(provider, stage, canonical))
        engine.sweep(t)
        if t >= 0:
            u = engine.committed(t + 1) - canonical.A_I @ x
            x = canonical.step(x, u)
            controls.append(u)
            states.append(x)

    states = np.array(states)
    controls = np.array(controls).reshape(N, canonical.m)
    trajectory = Trajectory(states=states, controls=controls, cost=zcost.costs.evaluate(states, controls))
    run = OnlineRun(
        algorithm=algorithm,
        trajectory=trajectory,
        z_initial=zcost.zpath(engine.initial()),
        z_final=zcost.zpath(engine.final()),
        K=engine.K,
        W=W,
        oracle_name=oracle.name,
        gradient_evaluations=engine.gradient_evaluations,
        lookahead_excess=provider.max_excess,
    )
    logger.info(f"{algorithm} run finished: W={W}, K={engine.K}, cost={trajectory.cost:.6g}")
    return run


def foss_run(zcost: ZCost, oracle: Optional[InitializationOracle] = None) -> OnlineRun:
    """Pure oracle rollout (no gradient refinement)."""
    rule = MomentumRule.gradient_descent(1.0 / zcost.l_c)
    return run_receding_horizon(zcost, 1, rule, "foss", oracle)


def rhgd_run(
    zcost: ZCost,
    W: int,
    oracle: Optional[InitializationOracle] = None,
    stepsizes: Optional[StepSizes] = None,
) -> OnlineRun:
    """Receding-horizon gradient descent."""
    stepsizes = compute_stepsizes(zcost.l_c, zcost.zeta) if stepsizes is None else stepsizes
    return run_receding_horizon(zcost, W, stepsizes.gradient_rule, "rhgd", oracle)


def rhtm_run(
    zcost: ZCost,
    W: int,
    oracle: Optional[InitializationOracle] = None,
    stepsizes: Optional[StepSizes] = None,
) -> OnlineRun:
    """Receding-horizon triple momentum."""
    stepsizes = compute_stepsizes(zcost.l_c, zcost.zeta) if stepsizes is None else stepsizes
    return run_receding_horizon(zcost, W, stepsizes.triple_momentum_rule, "rhtm", oracle)


def rhag_run(zcost: ZCost, W: int, oracle: Optional[InitializationOracle] = None) -> OnlineRun:
    """Receding-horizon accelerated gradient (Nesterov)."""
    return run_receding_horizon(zcost, W, nesterov_rule(zcost.l_c, zcost.zeta), "rhag", oracle)


def dynamic_regret(run: OnlineRun, J_star: float, zeta: float) -> RegretReport:
    """
    Regret of a run against the offline optimum.

    Args:
        run: Online run
        J_star: Offline optimal cost of the same instance
        zeta: Condition number of C(z)

    Returns:
        RegretReport with the bound factor for the run's (zeta, K)

    Raises:
        NegativeRegretBeyondTolerance: if the run beats J_star by more than the tolerance
    """
    regret = run.cost - J_star
    tolerance = settings.NEGATIVE_REGRET_TOLERANCE * max(1.0, abs(J_star))
    if regret < -tolerance:
        logger.error(f"{run.algorithm} cost {run.cost:.10g} below offline optimum {J_star:.10g}")
        raise NegativeRegretBeyondTolerance(regret, tolerance)
    return RegretReport(
        algorithm=run.algorithm,
        oracle=run.oracle_name,
        W=run.W,
        K=run.K,
        J_online=run.cost,
        J_star=J_star,
        regret=regret,
        zeta=zeta,
        bound_factor=bound_factor(run.algorithm, zeta, run.K),
        gradient_evaluations=run.gradient_evaluations,
    )
