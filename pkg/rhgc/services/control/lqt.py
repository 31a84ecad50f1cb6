"""
Linear-quadratic tracking: finite-horizon dynamic programming, the Riccati fixed point,
the optimal steady state and the average-cost bias function.

All quantities live in the canonical coordinates of the supplied CanonicalSystem.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple
import logging

import numpy as np

from rhgc.core.config import settings
from rhgc.core.errors import (
    DimensionMismatch,
    LqtError,
    NoConvergence,
    SingularInnerMatrix,
    SingularReducedHessian,
)
from rhgc.services.control.canonical import CanonicalSystem
from rhgc.services.control.costs import CostSequence, QuadraticCost
from rhgc.services.control.linalg import checked_solve

# Configure logging
logger = logging.getLogger(__name__)


@dataclass
class QuadraticInstance:
    """
    LQ tracking problem: stage costs 1/2 (x - theta_t)^T Q_t (x - theta_t) + 1/2 u^T R_t u for
    t < N and the terminal cost 1/2 (x - theta_N)^T Q_N (x - theta_N).
    """
    canonical: CanonicalSystem
    Q: np.ndarray  # (N, n, n)
    R: np.ndarray  # (N, m, m)
    theta: np.ndarray  # (N+1, n)
    Q_N: np.ndarray
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        n, m = self.canonical.n, self.canonical.m
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        self.Q_N = np.asarray(self.Q_N, dtype=float)
        N = self.Q.shape[0]
        if self.Q.shape != (N, n, n) or self.R.shape != (N, m, m) or self.theta.shape != (N + 1, n):
            raise DimensionMismatch(
                f"Inconsistent LQT shapes Q{self.Q.shape}, R{self.R.shape}, theta{self.theta.shape}"
            )
        if self.Q_N.shape != (n, n):
            raise DimensionMismatch(f"Terminal weight has shape {self.Q_N.shape}, expected ({n}, {n})")
        self.x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=float).reshape(n)

    @property
    def N(self) -> int:
        return self.Q.shape[0]

    def to_costs(self) -> CostSequence:
        state_costs = [QuadraticCost(self.Q[t], self.theta[t]) for t in range(self.N)]
        state_costs.append(QuadraticCost(self.Q_N, self.theta[self.N]))
        control_costs = [QuadraticCost(self.R[t]) for t in range(self.N)]
        return CostSequence(state_costs, control_costs, x0=self.x0)

    @classmethod
    def from_costs(cls, canonical: CanonicalSystem, costs: CostSequence) -> Optional["QuadraticInstance"]:
        """LQT view of a cost sequence, or None when it is not quadratic with zero control targets."""
        if not costs.is_quadratic:
            return None
        if any(np.any(g.target != 0.0) for g in costs.control_costs):
            return None
        N = costs.N
        return cls(
            canonical=canonical,
            Q=np.array([costs.state_costs[t].weight for t in range(N)]),
            R=np.array([g.weight for g in costs.control_costs]),
            theta=np.array([f.target for f in costs.state_costs]),
            Q_N=costs.state_costs[N].weight,
            x0=costs.x0,
        )


@dataclass
class DpSolution:
    """Backward-pass quantities and the optimal trajectory of a finite-horizon LQT problem."""
    P: np.ndarray  # (N+1, n, n)
    beta: np.ndarray  # (N+1, n)
    alpha: np.ndarray  # (N+1, n)
    M: np.ndarray  # (N, n, n)
    H: np.ndarray  # (N, n, n)
    K: np.ndarray  # (N, m, n)
    Kp: np.ndarray  # (N, m, n)
    Kalpha: np.ndarray  # (N, m, n)
    x_star: np.ndarray  # (N+1, n)
    u_star: np.ndarray  # (N, m)
    J_star: float
    value_formula: float

    def alpha_controls(self) -> np.ndarray:
        """Optimal controls from the costate form u = -K x + K_alpha alpha_{t+1}."""
        N = self.u_star.shape[0]
        return np.array([
            -self.K[t] @ self.x_star[t] + self.Kalpha[t] @ self.alpha[t + 1] for t in range(N)
        ])


def _riccati_step(P_next: np.ndarray, Q: np.ndarray, R: np.ndarray, A: np.ndarray, B: np.ndarray, stage: int):
    """One step of P = Q + A^T (P' - P' B (R + B^T P' B)^{-1} B^T P') A."""
    S = R + B.T @ P_next @ B
    Kp = checked_solve(S, B.T @ P_next, lambda r: SingularInnerMatrix(stage, r), assume_a="pos")
    M = P_next - P_next @ B @ Kp
    M = 0.5 * (M + M.T)
    P = Q + A.T @ M @ A
    return 0.5 * (P + P.T), M, Kp, S


def dp_solve(instance: QuadraticInstance) -> DpSolution:
    """
    Finite-horizon dynamic programming.

    Args:
        instance: LQ tracking problem

    Returns:
        DpSolution with the optimal cost from simulation and from the value function formula
    """
    canonical = instance.canonical
    A, B = canonical.A_hat, canonical.B_hat
    N, n, m = instance.N, canonical.n, canonical.m
    Q, R, theta = instance.Q, instance.R, instance.theta

    P = np.zeros((N + 1, n, n))
    beta = np.zeros((N + 1, n))
    alpha = np.zeros((N + 1, n))
    M = np.zeros((N, n, n))
    H = np.zeros((N, n, n))
    K = np.zeros((N, m, n))
    Kp = np.zeros((N, m, n))
    Kalpha = np.zeros((N, m, n))

    P[N] = instance.Q_N
    beta[N] = theta[N]
    alpha[N] = instance.Q_N @ theta[N]
    for t in range(N - 1, -1, -1):
        P[t], M[t], Kp[t], S = _riccati_step(P[t + 1], Q[t], R[t], A, B, t)
        K[t] = Kp[t] @ A
        Kalpha[t] = checked_solve(S, B.T, lambda r, t=t: SingularInnerMatrix(t, r), assume_a="pos")
        alpha[t] = Q[t] @ theta[t] + (A - B @ K[t]).T @ alpha[t + 1]
        error = lambda r, t=t: SingularInnerMatrix(t, r)
        beta[t] = checked_solve(P[t], Q[t] @ theta[t] + A.T @ M[t] @ beta[t + 1], error, assume_a="pos")
        H[t] = M[t] - M[t] @ A @ checked_solve(P[t], A.T @ M[t], error, assume_a="pos")

    x = np.zeros((N + 1, n))
    u = np.zeros((N, m))
    x[0] = instance.x0
    for t in range(N):
        u[t] = -K[t] @ x[t] + Kp[t] @ beta[t + 1]
        x[t + 1] = A @ x[t] + B @ u[t]
    J_star = instance.to_costs().evaluate(x, u)

    d0 = instance.x0 - beta[0]
    value = 0.5 * float(d0 @ P[0] @ d0)
    for k in range(N):
        e = A @ theta[k] - beta[k + 1]
        value += 0.5 * float(e @ H[k] @ e)

    logger.debug(f"DP solved: N={N}, J*={J_star:.10g}, value formula {value:.10g}")
    return DpSolution(
        P=P, beta=beta, alpha=alpha, M=M, H=H, K=K, Kp=Kp, Kalpha=Kalpha,
        x_star=x, u_star=u, J_star=J_star, value_formula=value,
    )


def riccati_residual(P: np.ndarray, Q: np.ndarray, R: np.ndarray, canonical: CanonicalSystem) -> float:
    A, B = canonical.A_hat, canonical.B_hat
    S = R + B.T @ P @ B
    rhs = Q + A.T @ (P - P @ B @ np.linalg.solve(S, B.T @ P)) @ A
    return float(np.linalg.norm(P - rhs))


def solve_dare(Q: np.ndarray, R: np.ndarray, canonical: CanonicalSystem) -> np.ndarray:
    """
    Solve P = Q + A^T (P - P B (R + B^T P B)^{-1} B^T P) A by value iteration from P = Q.

    Args:
        Q: State weight (positive definite)
        R: Control weight (positive definite)
        canonical: Canonical system

    Returns:
        The stabilizing solution P_e

    Raises:
        NoConvergence: when the fixed point is not reached within the iteration cap
    """
    A, B = canonical.A_hat, canonical.B_hat
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = Q.copy()
    change = float("inf")
    for iteration in range(1, settings.DARE_MAX_ITERATIONS + 1):
        P_next, *_ = _riccati_step(P, Q, R, A, B, -1)
        change = float(np.max(np.abs(P_next - P)))
        P = P_next
        if change <= settings.DARE_TOLERANCE * max(1.0, float(np.max(np.abs(P)))):
            break
    else:
        logger.error(f"DARE value iteration did not converge (last change {change:.3e})")
        raise NoConvergence(settings.DARE_MAX_ITERATIONS, change)

    residual = riccati_residual(P, Q, R, canonical)
    if residual > 1e-9 * max(1.0, float(np.linalg.norm(P))):
        raise NoConvergence(iteration, residual)
    logger.debug(f"DARE converged after {iteration} iterations, residual {residual:.2e}")
    return P


@dataclass
class SteadyStateSolution:
    """
    Optimal steady state of one stage cost pair and, when computed, the average-cost bias
    function h(x) = 1/2 (x - beta_e)^T P_e (x - beta_e) with average cost lambda_e.
    """
    x_e: np.ndarray
    u_e: np.ndarray
    z_e: np.ndarray
    F_1: np.ndarray
    F_2: np.ndarray
    P_e: Optional[np.ndarray] = None
    beta_e: Optional[np.ndarray] = None
    lambda_e: Optional[float] = None
    K_e: Optional[np.ndarray] = None
    Kp_e: Optional[np.ndarray] = None
    M_e: Optional[np.ndarray] = None
    H_e: Optional[np.ndarray] = None
    F: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = field(default=None, repr=False)
    R: Optional[np.ndarray] = field(default=None, repr=False)
    theta: Optional[np.ndarray] = field(default=None, repr=False)

    def bias(self, x: np.ndarray) -> float:
        self._require_bias()
        d = np.asarray(x, dtype=float) - self.beta_e
        return 0.5 * float(d @ self.P_e @ d)

    def control(self, x: np.ndarray) -> np.ndarray:
        """Stationary optimal control u = -K_e x + K'_e beta_e."""
        self._require_bias()
        return -self.K_e @ x + self.Kp_e @ self.beta_e

    def bellman_residual(self, x: np.ndarray, canonical: CanonicalSystem) -> float:
        """min_u [f(x) + g(u) + h(Ax + Bu)] - h(x) - lambda_e."""
        self._require_bias()
        u = self.control(x)
        d = x - self.theta
        stage = 0.5 * float(d @ self.Q @ d) + 0.5 * float(u @ self.R @ u)
        return stage + self.bias(canonical.step(x, u)) - self.bias(x) - self.lambda_e

    def _require_bias(self) -> None:
        if self.P_e is None:
            raise LqtError("Bias function not computed; use bias_function()")


def steady_state(Q: np.ndarray, R: np.ndarray, theta: np.ndarray, canonical: CanonicalSystem) -> SteadyStateSolution:
    """
    Optimal steady state of 1/2 (x - theta)^T Q (x - theta) + 1/2 u^T R u subject to x = Ax + Bu.

    Steady states are (F_1 z, G z) with G = I - A(I,:) F_1, and the optimum is z_e = F_2 theta
    with F_2 = (F_1^T Q F_1 + G^T R G)^{-1} F_1^T Q.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    theta = np.asarray(theta, dtype=float).reshape(canonical.n)
    F_1 = canonical.replication
    G = np.eye(canonical.m) - canonical.A_I @ F_1
    reduced = F_1.T @ Q @ F_1 + G.T @ R @ G
    F_2 = checked_solve(reduced, F_1.T @ Q, SingularReducedHessian, assume_a="pos")
    z_e = F_2 @ theta
    return SteadyStateSolution(
        x_e=F_1 @ z_e, u_e=G @ z_e, z_e=z_e, F_1=F_1, F_2=F_2, Q=Q, R=R, theta=theta,
    )


def bias_function(
    Q: np.ndarray,
    R: np.ndarray,
    theta: np.ndarray,
    canonical: CanonicalSystem,
    P_e: Optional[np.ndarray] = None,
) -> SteadyStateSolution:
    """
    Average-cost solution: bias function center beta_e = P_e^{-1} alpha_e with
    (I - (A - B K_e)^T) alpha_e = Q theta, and lambda_e = 1/2 (A theta - beta_e)^T H_e (A theta - beta_e).

    Args:
        Q: State weight
        R: Control weight
        theta: Target
        canonical: Canonical system
        P_e: DARE solution when already known

    Returns:
        SteadyStateSolution with both the steady-state and the bias parts filled
    """
    solution = steady_state(Q, R, theta, canonical)
    Q, R, theta = solution.Q, solution.R, solution.theta
    A, B = canonical.A_hat, canonical.B_hat
    n = canonical.n
    P_e = solve_dare(Q, R, canonical) if P_e is None else P_e
    _, M_e, Kp_e, _ = _riccati_step(P_e, Q, R, A, B, -1)
    K_e = Kp_e @ A
    closed_loop = A - B @ K_e
    error = lambda r: SingularInnerMatrix(-1, r)
    # beta_e = F theta with F = P_e^{-1} (I - (A - B K_e)^T)^{-1} Q
    F = checked_solve(P_e, checked_solve(np.eye(n) - closed_loop.T, Q, error), error, assume_a="pos")
    beta_e = F @ theta
    H_e = M_e - M_e @ A @ checked_solve(P_e, A.T @ M_e, error, assume_a="pos")
    e = A @ theta - beta_e
    solution.P_e = P_e
    solution.beta_e = beta_e
    solution.lambda_e = 0.5 * float(e @ H_e @ e)
    solution.K_e = K_e
    solution.Kp_e = Kp_e
    solution.M_e = M_e
    solution.H_e = H_e
    solution.F = F
    return solution


def riccati_envelope(mu_f: float, l_f: float, mu_g: float, l_g: float, canonical: CanonicalSystem) -> Tuple[float, float]:
    """
    Eigenvalue range containing every Riccati iterate when Q_t in [mu_f I, l_f I] and
    R_t in [mu_g I, l_g I] (and the terminal weight in the same range of DARE solutions).
    """
    n, m = canonical.n, canonical.m
    low = solve_dare(mu_f * np.eye(n), mu_g * np.eye(m), canonical)
    high = solve_dare(l_f * np.eye(n), l_g * np.eye(m), canonical)
    return float(np.linalg.eigvalsh(low)[0]), float(np.linalg.eigvalsh(high)[-1])


@dataclass
class BoundTerms:
    """Variation terms entering the FOSS and RHTM regret bounds for LQT."""
    theta_path_length: float
    P_variation: float
    beta_variation: float
    x_e_variation: float
    bias_variation: Optional[float] = None


def corollary_bounds(instance: QuadraticInstance, dp: Optional[DpSolution] = None) -> BoundTerms:
    """
    Path-length style terms of the LQT regret bounds.

    Conventions: theta_{-1} = 0, x^e_{-1} = x_0, and at t = N the terminal cost stands in for
    the steady state (P^e_N = Q_N, beta^e_N = x^e_N = theta_N).

    Args:
        instance: LQ tracking problem
        dp: Optional DP solution; when given, the bias-function variation
            sum_t (h_{t-1}(x*_t) - h_t(x*_t)) is included

    Returns:
        BoundTerms
    """
    N, canonical = instance.N, instance.canonical
    theta = instance.theta
    previous = np.vstack([np.zeros((1, canonical.n)), theta[:-1]])
    path_length = float(np.sum(np.linalg.norm(theta - previous, axis=1)))

    P_e: List[np.ndarray] = []
    beta_e: List[np.ndarray] = []
    x_e: List[np.ndarray] = []
    cache = {}
    for t in range(N):
        key = (instance.Q[t].tobytes(), instance.R[t].tobytes())
        if key not in cache:
            cache[key] = solve_dare(instance.Q[t], instance.R[t], canonical)
        solution = bias_function(instance.Q[t], instance.R[t], theta[t], canonical, P_e=cache[key])
        P_e.append(solution.P_e)
        beta_e.append(solution.beta_e)
        x_e.append(solution.x_e)
    P_e.append(instance.Q_N)
    beta_e.append(theta[N])
    x_e.append(theta[N])

    P_variation = sum(float(np.linalg.norm(P_e[t] - P_e[t - 1], 2)) for t in range(1, N + 1))
    beta_variation = sum(float(np.linalg.norm(beta_e[t] - beta_e[t - 1])) for t in range(1, N + 1))
    x_prev = [instance.x0] + x_e[:-1]
    x_e_variation = sum(float(np.linalg.norm(x_prev[t] - x_e[t])) for t in range(N + 1))

    bias_variation = None
    if dp is not None:
        def h(t: int, x: np.ndarray) -> float:
            d = x - beta_e[t]
            return 0.5 * float(d @ P_e[t] @ d)

        bias_variation = sum(h(t - 1, dp.x_star[t]) - h(t, dp.x_star[t]) for t in range(1, N + 1))

    return BoundTerms(
        theta_path_length=path_length,
        P_variation=P_variation,
        beta_variation=beta_variation,
        x_e_variation=x_e_variation,
        bias_variation=bias_variation,
    )


def random_quadratic_instance(
    canonical: CanonicalSystem,
    N: int,
    rng: np.random.Generator,
    weight_range: Tuple[float, float] = (1.0, 2.0),
    theta_range: Tuple[float, float] = (-10.0, 10.0),
    time_invariant: bool = False,
    terminal: str = "stage",
    x0: Optional[np.ndarray] = None,
) -> QuadraticInstance:
    """
    Random LQT instance with diagonal weights.

    Args:
        canonical: Canonical system
        N: Horizon
        rng: Random generator
        weight_range: Interval of the i.i.d. uniform diagonal entries of Q_t and R_t
        theta_range: Interval of the i.i.d. uniform target entries
        time_invariant: Draw Q, R once and reuse them at every stage
        terminal: "stage" draws Q_N like Q_t, "dare" uses the Riccati solution of (Q_{N-1}, R_{N-1})
        x0: Initial state, zero by default

    Returns:
        QuadraticInstance
    """
    n, m = canonical.n, canonical.m
    low, high = weight_range
    draws = 1 if time_invariant else N
    Q_diag = rng.uniform(low, high, size=(draws, n))
    R_diag = rng.uniform(low, high, size=(draws, m))
    if time_invariant:
        Q_diag = np.repeat(Q_diag, N, axis=0)
        R_diag = np.repeat(R_diag, N, axis=0)
    Q = np.array([np.diag(d) for d in Q_diag])
    R = np.array([np.diag(d) for d in R_diag])
    theta = rng.uniform(theta_range[0], theta_range[1], size=(N + 1, n))
    if terminal == "stage":
        Q_N = np.diag(rng.uniform(low, high, size=n))
    elif terminal == "dare":
        Q_N = solve_dare(Q[-1], R[-1], canonical)
    else:
        raise ValueError(f"Unknown terminal rule '{terminal}'")
    return QuadraticInstance(canonical=canonical, Q=Q, R=R, theta=theta, Q_N=Q_N, x0=x0)
