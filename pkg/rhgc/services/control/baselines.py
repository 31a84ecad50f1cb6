"""
Comparators for the online controllers: the offline optimum in hindsight (the regret
denominator) and suboptimal fast-gradient MPC with a fixed iteration budget.
"""
from dataclasses import dataclass
from typing import Optional
import logging
import math

import numpy as np

from rhgc.core.config import settings
from rhgc.core.errors import NoConvergence, NonFiniteIterate
from rhgc.services.control.algorithms import OnlineRun, compute_stepsizes
from rhgc.services.control.costs import WindowedCostProvider
from rhgc.services.control.engine import minimize_momentum
from rhgc.services.control.linalg import spectral_norm
from rhgc.services.control.lqt import QuadraticInstance, dp_solve
from rhgc.services.control.reformulate import Trajectory, ZCost, ZPath

# Configure logging
logger = logging.getLogger(__name__)

# Largest N*m for which the dense Hz = eta cross-check is assembled
LINEAR_CHECK_MAX_SIZE = 400


@dataclass
class OfflineSolution:
    """Offline optimum of C(z)."""
    z_star: ZPath
    J_star: float
    method: str
    residual: float
    # Relative disagreement with the dense linear solve, when it was run
    cross_check: Optional[float] = None


def _linear_solve(zcost: ZCost):
    H, eta, _ = zcost.linear_system()
    z = np.linalg.solve(H, eta)
    return z.reshape(zcost.N, zcost.m), float(np.linalg.norm(H @ z - eta))


def offline_optimal(zcost: ZCost, method: Optional[str] = None) -> OfflineSolution:
    """
    Offline optimum with full knowledge of every stage cost.

    Quadratic instances with zero control targets are solved by dynamic programming and
    cross-checked against the dense linear system when it is small enough; any other convex
    instance is solved by batch triple momentum on C(z).

    Args:
        zcost: Objective in canonical coordinates
        method: Force "dp", "linear_solve" or "batch_tm"

    Returns:
        OfflineSolution

    Raises:
        NoConvergence: if batch triple momentum misses the tolerance
    """
    canonical = zcost.canonical
    instance = QuadraticInstance.from_costs(canonical, zcost.costs)
    if method is None:
        method = "dp" if instance is not None else "batch_tm"

    cross_check = None
    if method == "dp":
        if instance is None:
            raise ValueError("Dynamic programming requires quadratic costs with zero control targets")
        dp = dp_solve(instance)
        z = dp.x_star[1:, list(canonical.indices)]
        J_star = zcost.value(z)
        if zcost.N * zcost.m <= LINEAR_CHECK_MAX_SIZE:
            z_lin, _ = _linear_solve(zcost)
            J_lin = zcost.value(z_lin)
            cross_check = abs(J_lin - J_star) / max(1.0, abs(J_star))
            if cross_check > 1e-8:
                logger.warning(f"DP and linear solve disagree: relative gap {cross_check:.3e}")
    elif method == "linear_solve":
        z, _ = _linear_solve(zcost)
        J_star = zcost.value(z)
    elif method == "batch_tm":
        stepsizes = compute_stepsizes(zcost.l_c, zcost.zeta)
        z0 = np.zeros((zcost.N, zcost.m))
        scale = 1.0 + float(np.linalg.norm(zcost.gradient(z0)))
        z, residual, iterations = minimize_momentum(
            zcost.gradient, z0, stepsizes.triple_momentum_rule,
            tolerance=settings.OFFLINE_TOLERANCE * scale,
            max_iterations=settings.OFFLINE_MAX_ITERATIONS,
        )
        if residual > settings.OFFLINE_TOLERANCE * scale:
            logger.error(f"Batch triple momentum stopped at gradient norm {residual:.3e}")
            raise NoConvergence(iterations, residual)
        logger.debug(f"Batch triple momentum converged in {iterations} iterations")
        J_star = zcost.value(z)
    else:
        raise ValueError(f"Unknown offline method '{method}'")

    residual = float(np.linalg.norm(zcost.gradient(z)))
    logger.info(f"Offline optimum ({method}): J*={J_star:.10g}, gradient norm {residual:.2e}")
    return OfflineSolution(
        z_star=zcost.zpath(z), J_star=J_star, method=method, residual=residual, cross_check=cross_check,
    )


class TruncatedProblem:
    """
    W-stage problem seen by MPC at time t: minimize over u_t..u_{t+h-1} the stage costs inside
    the window, starting from the observed x_t. f_N is included once the window reaches N.
    """

    def __init__(self, zcost: ZCost, provider: WindowedCostProvider, t: int, W: int, x_t: np.ndarray):
        self.canonical = zcost.canonical
        self.provider = provider
        self.t = t
        self.N = zcost.N
        self.horizon = min(W, self.N - t)
        self.terminal = t + W - 1 >= self.N
        self.x_t = x_t

    def rollout(self, U: np.ndarray) -> np.ndarray:
        states = [self.x_t]
        for u in U:
            states.append(self.canonical.step(states[-1], u))
        return np.array(states)

    def gradient(self, U: np.ndarray) -> np.ndarray:
        """Adjoint gradient with respect to the control sequence."""
        A, B = self.canonical.A_hat, self.canonical.B_hat
        states = self.rollout(U)
        t, h = self.t, self.horizon
        if self.terminal:
            adjoint = self.provider.state_cost(t + h).gradient(states[h])
        else:
            adjoint = np.zeros(self.canonical.n)
        grad = np.zeros_like(U)
        for k in range(h - 1, -1, -1):
            grad[k] = self.provider.control_cost(t + k).gradient(U[k]) + B.T @ adjoint
            adjoint = self.provider.state_cost(t + k).gradient(states[k]) + A.T @ adjoint
        return grad


def input_to_state_norm(zcost: ZCost, W: int) -> float:
    """Spectral norm of the map (u_0..u_{W-1}) -> (x_1..x_W) with x_0 = 0."""
    A, B = zcost.canonical.A_hat, zcost.canonical.B_hat
    n, m = B.shape
    G = np.zeros((W * n, W * m))
    powers = [B]
    for _ in range(W - 1):
        powers.append(A @ powers[-1])
    for row in range(W):
        for col in range(row + 1):
            G[row * n:(row + 1) * n, col * m:(col + 1) * m] = powers[row - col]
    return spectral_norm(G)


def submpc_momentum(k: int, L: float, mu: float) -> float:
    """
    Momentum of the k-th Nesterov iteration (k >= 1) on an L-smooth, mu-strongly convex problem.

    With mu > 0 the constant (sqrt(L) - sqrt(mu)) / (sqrt(L) + sqrt(mu)); otherwise the schedule
    (k - 1) / (k + 2).
    """
    if mu > 0:
        return (math.sqrt(L) - math.sqrt(mu)) / (math.sqrt(L) + math.sqrt(mu))
    return (k - 1) / (k + 2)


def submpc_run(zcost: ZCost, W: int, iterations: int, warm_start: bool = False) -> OnlineRun:
    """
    Suboptimal MPC: at each t, a fixed number of Nesterov accelerated-gradient iterations on the
    truncated W-stage problem.

    Every step starts from zero controls, so a fixed iteration budget stops paying off once W
    is large. With warm_start the previous solution shifted by one stage is used instead.

    Args:
        zcost: Objective in canonical coordinates
        W: Lookahead window
        iterations: Nesterov iterations per online step
        warm_start: Start from the shifted previous solution

    Returns:
        OnlineRun; each iteration is charged 2W stage-cost gradient evaluations
    """
    if W < 1 or iterations < 1:
        raise ValueError(f"subMPC needs W >= 1 and iterations >= 1, got W={W}, iterations={iterations}")
    canonical, N = zcost.canonical, zcost.N
    provider = WindowedCostProvider(zcost.costs)

    L = zcost.costs.l_f * input_to_state_norm(zcost, min(W, N)) ** 2 + zcost.costs.l_g
    mu = zcost.costs.mu_g
    step = 1.0 / L

    x = zcost.costs.x0.copy()
    states = [x]
    controls = []
    warm = np.zeros((min(W, N), canonical.m))
    evaluations = 0
    for t in range(N):
        provider.reveal(t + W - 1)
        problem = TruncatedProblem(zcost, provider, t, W, x)
        U = warm[:problem.horizon].copy() if warm_start else np.zeros((problem.horizon, canonical.m))
        U_prev = U.copy()
        for k in range(1, iterations + 1):
            V = U + submpc_momentum(k, L, mu) * (U - U_prev)
            U_prev = U
            U = V - step * problem.gradient(V)
            evaluations += 2 * W
        if not np.all(np.isfinite(U)):
            raise NonFiniteIterate(t, iterations)
        u = U[0]
        x = canonical.step(x, u)
        controls.append(u)
        states.append(x)
        # shift by one stage and duplicate the last control
        warm = np.vstack([U[1:], U[-1:]]) if len(U) > 1 else U.copy()

    states = np.array(states)
    controls = np.array(controls)
    trajectory = Trajectory(states=states, controls=controls, cost=zcost.costs.evaluate(states, controls))
    z = zcost.zpath(states[1:, list(canonical.indices)])
    logger.info(f"submpc-{iterations} run finished: W={W}, cost={trajectory.cost:.6g}")
    return OnlineRun(
        algorithm=f"submpc-{iterations}",
        trajectory=trajectory,
        z_initial=z,
        z_final=z,
        K=(W - 1) // canonical.p,
        W=W,
        oracle_name="warm-start" if warm_start else "cold-start",
        gradient_evaluations=evaluations,
        lookahead_excess=provider.max_excess,
    )
