from abc import ABC, abstractmethod
from typing import List, Optional, Sequence, Union
import logging

import numpy as np

from rhgc.core.errors import DimensionMismatch, OracleInformationViolation, StageOutOfRange

# Configure logging
logger = logging.getLogger(__name__)


class StageCost(ABC):
    """
    Abstract base class for a convex stage cost.

    A stage cost exposes its value and gradient at a point together with the
    strong-convexity and smoothness constants that the step-size rules rely on.
    """

    dim: int

    @abstractmethod
    def value(self, x: np.ndarray) -> float:
        pass

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        pass

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} does not provide a Hessian")

    @property
    @abstractmethod
    def strong_convexity(self) -> float:
        pass

    @property
    @abstractmethod
    def smoothness(self) -> float:
        pass

    @property
    def minimizer(self) -> Optional[np.ndarray]:
        """Unconstrained minimizer when known in closed form."""
        return None

    def transformed(self, S: np.ndarray, S_inv: np.ndarray) -> "StageCost":
        """
        Cost in new coordinates y = S x, i.e. y -> self(S_inv y).

        Args:
            S: Coordinate change
            S_inv: Its inverse

        Returns:
            The transported stage cost
        """
        return LinearlyTransformedCost(self, S, S_inv)


class QuadraticCost(StageCost):
    """Quadratic cost 1/2 (x - c)^T W (x - c) with W symmetric positive definite."""

    def __init__(self, weight: np.ndarray, target: Optional[np.ndarray] = None):
        weight = np.atleast_2d(np.asarray(weight, dtype=float))
        if weight.shape[0] != weight.shape[1]:
            raise DimensionMismatch(f"Weight must be square, got shape {weight.shape}")
        self.weight = 0.5 * (weight + weight.T)
        self.dim = weight.shape[0]
        if target is None:
            target = np.zeros(self.dim)
        self.target = np.asarray(target, dtype=float).reshape(self.dim)
        eigenvalues = np.linalg.eigvalsh(self.weight)
        self._mu = float(eigenvalues[0])
        self._l = float(eigenvalues[-1])

    def value(self, x: np.ndarray) -> float:
        d = np.asarray(x, dtype=float) - self.target
        return 0.5 * float(d @ self.weight @ d)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.weight @ (np.asarray(x, dtype=float) - self.target)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self.weight.copy()

    @property
    def strong_convexity(self) -> float:
        return self._mu

    @property
    def smoothness(self) -> float:
        return self._l

    @property
    def minimizer(self) -> np.ndarray:
        return self.target.copy()

    def transformed(self, S: np.ndarray, S_inv: np.ndarray) -> "QuadraticCost":
        # f(S^{-1} y) = 1/2 (y - S c)^T S^{-T} W S^{-1} (y - S c)
        return QuadraticCost(S_inv.T @ self.weight @ S_inv, S @ self.target)

    def __repr__(self) -> str:
        return f"QuadraticCost(dim={self.dim}, mu={self._mu:.4g}, l={self._l:.4g})"


class PseudoHuberCost(StageCost):
    """
    Smooth non-quadratic tracking cost.

    value(x) = kappa/2 ||x - c||^2 + s^2 sum_i (sqrt(1 + ((x_i - c_i)/s)^2) - 1)

    The quadratic part makes it kappa-strongly convex, the pseudo-Huber part adds at most 1 to
    the curvature, so it is (kappa + 1)-smooth.
    """

    def __init__(self, target: np.ndarray, curvature: float = 1.0, scale: float = 1.0):
        if curvature <= 0 or scale <= 0:
            raise ValueError("Curvature and scale must be positive")
        self.target = np.asarray(target, dtype=float).ravel()
        self.dim = self.target.size
        self.curvature = float(curvature)
        self.scale = float(scale)

    def value(self, x: np.ndarray) -> float:
        d = np.asarray(x, dtype=float) - self.target
        r = d / self.scale
        return 0.5 * self.curvature * float(d @ d) + self.scale ** 2 * float(np.sum(np.sqrt(1.0 + r * r) - 1.0))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.target
        r = d / self.scale
        return self.curvature * d + d / np.sqrt(1.0 + r * r)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.target
        r = d / self.scale
        return np.diag(self.curvature + (1.0 + r * r) ** -1.5)

    @property
    def strong_convexity(self) -> float:
        return self.curvature

    @property
    def smoothness(self) -> float:
        return self.curvature + 1.0

    @property
    def minimizer(self) -> np.ndarray:
        return self.target.copy()


class LinearlyTransformedCost(StageCost):
    """
    Stage cost transported through a linear change of coordinates y = S x.

    The constants are rescaled as mu / ||S||^2 and l ||S^{-1}||^2, which bound the exact
    extreme curvatures of the transported cost.
    """

    def __init__(self, base: StageCost, S: np.ndarray, S_inv: np.ndarray):
        self.base = base
        self.S = np.asarray(S, dtype=float)
        self.S_inv = np.asarray(S_inv, dtype=float)
        self.dim = self.S.shape[0]
        self._norm_S = float(np.linalg.norm(self.S, 2))
        self._norm_S_inv = float(np.linalg.norm(self.S_inv, 2))

    def value(self, y: np.ndarray) -> float:
        return self.base.value(self.S_inv @ y)

    def gradient(self, y: np.ndarray) -> np.ndarray:
        return self.S_inv.T @ self.base.gradient(self.S_inv @ y)

    def hessian(self, y: np.ndarray) -> np.ndarray:
        return self.S_inv.T @ self.base.hessian(self.S_inv @ y) @ self.S_inv

    @property
    def strong_convexity(self) -> float:
        return self.base.strong_convexity / self._norm_S ** 2

    @property
    def smoothness(self) -> float:
        return self.base.smoothness * self._norm_S_inv ** 2

    @property
    def minimizer(self) -> Optional[np.ndarray]:
        base_min = self.base.minimizer
        return None if base_min is None else self.S @ base_min

    def transformed(self, S: np.ndarray, S_inv: np.ndarray) -> "LinearlyTransformedCost":
        return LinearlyTransformedCost(self.base, S @ self.S, self.S_inv @ S_inv)


class CostSequence:
    """
    Stage costs of a finite-horizon control problem.

    Holds f_0..f_N (state costs, f_N terminal) and g_0..g_{N-1} (control costs) together
    with the initial state x_0.
    """

    def __init__(
        self,
        state_costs: Sequence[StageCost],
        control_costs: Sequence[StageCost],
        x0: Optional[np.ndarray] = None,
    ):
        self.state_costs: List[StageCost] = list(state_costs)
        self.control_costs: List[StageCost] = list(control_costs)
        if len(self.state_costs) != len(self.control_costs) + 1:
            raise DimensionMismatch(
                f"Expected N+1 state costs for N control costs, got "
                f"{len(self.state_costs)} and {len(self.control_costs)}"
            )
        if not self.control_costs:
            raise DimensionMismatch("Horizon must be at least one stage")
        self.n = self.state_costs[0].dim
        self.m = self.control_costs[0].dim
        if any(f.dim != self.n for f in self.state_costs) or any(g.dim != self.m for g in self.control_costs):
            raise DimensionMismatch("Stage costs have inconsistent dimensions")
        self.x0 = np.zeros(self.n) if x0 is None else np.asarray(x0, dtype=float).reshape(self.n)

    @property
    def N(self) -> int:
        return len(self.control_costs)

    def state_cost(self, t: int) -> StageCost:
        if not 0 <= t <= self.N:
            raise StageOutOfRange(t, 0, self.N)
        return self.state_costs[t]

    def control_cost(self, t: int) -> StageCost:
        if not 0 <= t <= self.N - 1:
            raise StageOutOfRange(t, 0, self.N - 1)
        return self.control_costs[t]

    @property
    def mu_f(self) -> float:
        return min(f.strong_convexity for f in self.state_costs)

    @property
    def l_f(self) -> float:
        return max(f.smoothness for f in self.state_costs)

    @property
    def mu_g(self) -> float:
        return min(g.strong_convexity for g in self.control_costs)

    @property
    def l_g(self) -> float:
        return max(g.smoothness for g in self.control_costs)

    @property
    def is_quadratic(self) -> bool:
        return all(isinstance(c, QuadraticCost) for c in self.state_costs + self.control_costs)

    def evaluate(self, states: np.ndarray, controls: np.ndarray) -> float:
        """
        Total cost J(x, u) of a trajectory.

        Args:
            states: Array of shape (N+1, n) holding x_0..x_N
            controls: Array of shape (N, m) holding u_0..u_{N-1}

        Returns:
            Sum of all stage costs
        """
        if states.shape != (self.N + 1, self.n) or controls.shape != (self.N, self.m):
            raise DimensionMismatch(
                f"Trajectory shapes {states.shape}, {controls.shape} do not match horizon {self.N}"
            )
        total = sum(f.value(x) for f, x in zip(self.state_costs, states))
        total += sum(g.value(u) for g, u in zip(self.control_costs, controls))
        return float(total)

    def transformed(
        self, S_x: np.ndarray, S_x_inv: np.ndarray, S_u: np.ndarray, S_u_inv: np.ndarray
    ) -> "CostSequence":
        return CostSequence(
            [f.transformed(S_x, S_x_inv) for f in self.state_costs],
            [g.transformed(S_u, S_u_inv) for g in self.control_costs],
            x0=S_x @ self.x0,
        )


class WindowedCostProvider:
    """
    Information-gated view of a cost sequence.

    Only stages up to the revealed limit may be read. Every read is recorded, so a run can
    report the largest stage it touched relative to what it was allowed to see.
    """

    def __init__(self, costs: CostSequence):
        self.costs = costs
        self.limit = -1
        self.max_stage_read = -1
        self.max_excess = -np.inf

    @property
    def N(self) -> int:
        return self.costs.N

    @property
    def x0(self) -> np.ndarray:
        return self.costs.x0

    def reveal(self, limit: int) -> None:
        """Allow reads of stages up to and including limit."""
        if limit < self.limit:
            raise ValueError(f"Revealed window cannot shrink ({self.limit} -> {limit})")
        self.limit = limit

    def _record(self, t: int) -> None:
        if t > self.limit:
            logger.error(f"Stage {t} requested with lookahead limit {self.limit}")
            raise OracleInformationViolation(t, self.limit)
        self.max_stage_read = max(self.max_stage_read, t)
        self.max_excess = max(self.max_excess, t - self.limit)

    def state_cost(self, t: int) -> StageCost:
        self._record(t)
        return self.costs.state_cost(t)

    def control_cost(self, t: int) -> StageCost:
        self._record(t)
        return self.costs.control_cost(t)


CostSource = Union[CostSequence, WindowedCostProvider]
