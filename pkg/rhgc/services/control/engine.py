"""
Receding-horizon iterate bookkeeping shared by the online controllers.

The online loop refines stage tau = t + W - j p at iteration j during online time t, backward in
j. Every stage therefore receives its iterations in order, and each iteration only reads
neighbours at the previous iteration, which are already available. Iterates are kept per
(iteration, stage) so that the online result matches the batch optimizer exactly.
"""
from dataclasses import dataclass
from typing import Callable, Optional, Tuple
import logging

import numpy as np

from rhgc.core.errors import NonFiniteIterate

# Configure logging
logger = logging.getLogger(__name__)

# (stage, local window of 2p+1 vectors) -> partial gradient
LocalGradient = Callable[[int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MomentumRule:
    """
    Triple-momentum style update

        omega(j) = (1 + a_omega) omega(j-1) - a_omega omega(j-2) - step * grad(y(j-1))
        y(j)     = (1 + a_y) omega(j) - a_y omega(j-1)
        z(j)     = (1 + a_z) omega(j) - a_z omega(j-1)

    Gradient descent is the case without momentum; Nesterov's method sets a_z = 0.
    """
    step: float
    omega: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @classmethod
    def gradient_descent(cls, step: float) -> "MomentumRule":
        return cls(step=step)

    @classmethod
    def nesterov(cls, step: float, momentum: float) -> "MomentumRule":
        return cls(step=step, omega=momentum, y=momentum, z=0.0)

    def update(
        self, omega_prev: np.ndarray, omega_prev2: np.ndarray, grad: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """One iteration; returns (omega, y, z)."""
        omega = (1.0 + self.omega) * omega_prev - self.omega * omega_prev2 - self.step * grad
        y = (1.0 + self.y) * omega - self.y * omega_prev
        z = (1.0 + self.z) * omega - self.z * omega_prev
        return omega, y, z


class RecedingHorizonEngine:
    """
    Iterate tables for stages 1-p..N+p at iterations 0..K.

    Stages below 1 hold the fixed history; stages above N do not exist and stay zero, they are
    never read by a correctly clamped local gradient.
    """

    def __init__(
        self,
        N: int,
        p: int,
        m: int,
        W: int,
        rule: MomentumRule,
        local_gradient: LocalGradient,
        history: np.ndarray,
        evaluations_per_gradient: int,
        iterations: Optional[int] = None,
    ):
        """
        Initialize the engine.

        Args:
            N: Horizon
            p: Coupling width (controllability index)
            m: Dimension of z
            W: Lookahead window
            rule: Momentum rule applied per stage
            local_gradient: Partial gradient callback
            history: z_{1-p}..z_0 as a (p, m) array
            evaluations_per_gradient: Stage-cost gradient evaluations charged per callback
            iterations: Inner iterations K, defaults to floor((W-1)/p)
        """
        if W < 1:
            raise ValueError(f"Lookahead window must be >= 1, got {W}")
        self.N, self.p, self.m, self.W = N, p, m, W
        self.K = (W - 1) // p if iterations is None else iterations
        self.rule = rule
        self.local_gradient = local_gradient
        self.evaluations_per_gradient = evaluations_per_gradient
        self.gradient_evaluations = 0

        rows = N + 2 * p
        # z_tau(j) at [j, tau + p - 1]; omega_tau(j) at [j + 1, tau + p - 1]
        self.z = np.zeros((self.K + 1, rows, m))
        self.y = np.zeros((self.K + 1, rows, m))
        self.omega = np.zeros((self.K + 2, rows, m))
        for table in (self.z, self.y, self.omega):
            table[:, :p] = history
        # highest iteration completed per stage row, -1 before initialization
        self.level = np.full(rows, -1, dtype=int)
        self.level[:p] = self.K

    def _row(self, stage: int) -> int:
        return stage + self.p - 1

    def initialize(self, stage: int, value: np.ndarray) -> None:
        """Step 1: omega(-1) = omega(0) = y(0) = z(0) = value."""
        if not 1 <= stage <= self.N:
            return
        r = self._row(stage)
        value = np.asarray(value, dtype=float).reshape(self.m)
        if not np.all(np.isfinite(value)):
            raise NonFiniteIterate(stage, 0)
        self.z[0, r] = value
        self.y[0, r] = value
        self.omega[0, r] = value
        self.omega[1, r] = value
        self.level[r] = 0

    def update_stage(self, stage: int, j: int) -> None:
        """Iteration j on one stage using neighbours at iteration j-1."""
        p, r = self.p, self._row(stage)
        local = self.y[j - 1, r - p:r + p + 1]
        grad = self.local_gradient(stage, local)
        self.gradient_evaluations += self.evaluations_per_gradient
        omega, y, z = self.rule.update(self.omega[j, r], self.omega[j - 1, r], grad)
        if not (np.all(np.isfinite(omega)) and np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
            logger.error(f"Non-finite iterate at stage {stage}, iteration {j}")
            raise NonFiniteIterate(stage, j)
        self.omega[j + 1, r] = omega
        self.y[j, r] = y
        self.z[j, r] = z
        self.level[r] = j

    def sweep(self, t: int) -> None:
        """Step 2 at online time t: stages t+W-jp for j = 1..K, skipping those outside [1, N]."""
        for j in range(1, self.K + 1):
            stage = t + self.W - j * self.p
            if 1 <= stage <= self.N:
                self.update_stage(stage, j)

    def committed(self, stage: int) -> np.ndarray:
        """z_stage(K)."""
        return self.z[self.K, self._row(stage)].copy()

    def latest(self, stage: int) -> np.ndarray:
        """Most refined iterate available for a stage."""
        r = self._row(stage)
        return self.z[max(self.level[r], 0), r].copy()

    def overwrite(self, stage: int, value: np.ndarray) -> None:
        """Replace a stage at every iteration, e.g. with an observed value."""
        r = self._row(stage)
        self.z[:, r] = value
        self.y[:, r] = value
        self.omega[:, r] = value
        self.level[r] = self.K

    def final(self) -> np.ndarray:
        """z_1(K)..z_N(K) as an (N, m) array."""
        p = self.p
        return self.z[self.K, p:p + self.N].copy()

    def initial(self) -> np.ndarray:
        p = self.p
        return self.z[0, p:p + self.N].copy()


def batch_momentum(
    gradient: Callable[[np.ndarray], np.ndarray],
    z0: np.ndarray,
    rule: MomentumRule,
    iterations: int,
) -> np.ndarray:
    """
    Run a momentum rule on a full objective for a fixed number of iterations.

    Args:
        gradient: Full gradient of the objective
        z0: Starting point, also used for omega(-1), omega(0), y(0)
        rule: Momentum rule
        iterations: Number of iterations

    Returns:
        z(iterations)
    """
    omega_prev2 = z0.copy()
    omega_prev = z0.copy()
    y = z0.copy()
    z = z0.copy()
    for _ in range(iterations):
        omega, y, z = rule.update(omega_prev, omega_prev2, gradient(y))
        omega_prev2, omega_prev = omega_prev, omega
    return z


def minimize_momentum(
    gradient: Callable[[np.ndarray], np.ndarray],
    z0: np.ndarray,
    rule: MomentumRule,
    tolerance: float,
    max_iterations: int,
) -> Tuple[np.ndarray, float, int]:
    """
    Iterate a momentum rule until the gradient norm drops below tolerance.

    Returns:
        (point, gradient norm at point, iterations used)
    """
    omega_prev2 = z0.copy()
    omega_prev = z0.copy()
    y = z0.copy()
    for k in range(max_iterations):
        grad = gradient(y)
        norm = float(np.linalg.norm(grad))
        if norm <= tolerance:
            return y, norm, k
        if not np.isfinite(norm):
            raise NonFiniteIterate(-1, k)
        omega, y, _ = rule.update(omega_prev, omega_prev2, grad)
        omega_prev2, omega_prev = omega_prev, omega
    return y, float(np.linalg.norm(gradient(y))), max_iterations
