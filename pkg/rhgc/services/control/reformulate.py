"""
The z-space reparameterization of a canonical-form control problem.

z_t collects the actuated entries of x_t. The state is a fixed arrangement of the last p values
of z, and the control is u_t = z_{t+1} - A(I,:) x_t, so the trajectory cost becomes an
unconstrained function C(z) of z_1..z_N whose stage terms only couple p+1 consecutive z's.
"""
from dataclasses import dataclass
from typing import Optional, Tuple
import logging

import numpy as np

from rhgc.core.errors import (
    DimensionMismatch,
    LengthMismatch,
    NonPositiveConstant,
    StageOutOfRange,
    WindowTooShort,
)
from rhgc.services.control.canonical import CanonicalSystem
from rhgc.services.control.costs import CostSequence, CostSource
from rhgc.services.control.linalg import spectral_norm

# Configure logging
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Trajectory:
    """Realized states x_0..x_N, controls u_0..u_{N-1} and their total cost."""
    states: np.ndarray
    controls: np.ndarray
    cost: float

    @property
    def N(self) -> int:
        return self.controls.shape[0]


@dataclass
class ZPath:
    """
    Decision variable z_1..z_N with the history z_{1-p}..z_0 induced by x_0.

    Attributes:
        z: Array of shape (N, m)
        history: Array of shape (p, m), row i holds z_{1-p+i}
    """
    z: np.ndarray
    history: np.ndarray

    @property
    def N(self) -> int:
        return self.z.shape[0]

    @property
    def full(self) -> np.ndarray:
        """z_{1-p}..z_N stacked; z_s sits at row s + p - 1."""
        return np.vstack([self.history, self.z])


def extract_z(x: np.ndarray, canonical: CanonicalSystem) -> np.ndarray:
    """Actuated entries of a canonical state."""
    return np.asarray(x, dtype=float)[list(canonical.indices)]


def history_of(x0: np.ndarray, canonical: CanonicalSystem) -> np.ndarray:
    """
    History z_{1-p}..z_0 so that the state assembled at t = 0 equals x0.

    Entries older than a block's length are never read and are set to zero.
    """
    p, m = canonical.p, canonical.m
    history = np.zeros((p, m))
    x0 = np.asarray(x0, dtype=float)
    history[p - 1 - canonical.row_lag, canonical.row_block] = x0
    return history


def state_of_z(window: np.ndarray, canonical: CanonicalSystem) -> np.ndarray:
    """
    Assemble x_t from z_{t-p+1}..z_t.

    Args:
        window: At least p consecutive z vectors, the last one being z_t
        canonical: Canonical system

    Returns:
        The state x_t
    """
    window = np.atleast_2d(np.asarray(window, dtype=float))
    p = canonical.p
    if window.shape[0] < p:
        raise WindowTooShort(p, window.shape[0])
    last = window.shape[0] - 1
    return window[last - canonical.row_lag, canonical.row_block]


def control_of_z(window: np.ndarray, canonical: CanonicalSystem) -> np.ndarray:
    """
    Control u_t = z_{t+1} - A(I,:) x_t from z_{t-p+1}..z_{t+1}.
    """
    window = np.atleast_2d(np.asarray(window, dtype=float))
    p = canonical.p
    if window.shape[0] < p + 1:
        raise WindowTooShort(p + 1, window.shape[0])
    x_t = state_of_z(window[:-1], canonical)
    return window[-1] - canonical.A_I @ x_t


def smoothness_params(canonical: CanonicalSystem, mu_f: float, l_f: float, l_g: float) -> Tuple[float, float, float]:
    """
    Strong convexity and smoothness constants of C(z).

    Args:
        canonical: Canonical system
        mu_f: Strong convexity of the state costs
        l_f: Smoothness of the state costs
        l_g: Smoothness of the control costs

    Returns:
        (mu_c, l_c, zeta) with l_c = p l_f + (p+1) l_g ||[I_m, -A(I,:)]||^2
    """
    for name, value in (("mu_f", mu_f), ("l_f", l_f), ("l_g", l_g)):
        if not value > 0:
            raise NonPositiveConstant(name, value)
    coupling = np.hstack([np.eye(canonical.m), -canonical.A_I])
    p = canonical.p
    l_c = p * l_f + (p + 1) * l_g * spectral_norm(coupling) ** 2
    mu_c = mu_f
    return mu_c, l_c, l_c / mu_c


class ZCost:
    """
    The objective C(z) of a canonical control problem.

    Builds the constants of C from the cost sequence and offers value, full gradient and
    local partial gradients.
    """

    def __init__(self, canonical: CanonicalSystem, costs: CostSequence):
        if costs.n != canonical.n or costs.m != canonical.m:
            raise DimensionMismatch(
                f"Costs of dimension ({costs.n}, {costs.m}) do not fit system ({canonical.n}, {canonical.m})"
            )
        self.canonical = canonical
        self.costs = costs
        self.history = history_of(costs.x0, canonical)
        self.mu_c, self.l_c, self.zeta = smoothness_params(canonical, costs.mu_f, costs.l_f, costs.l_g)
        logger.debug(f"C(z) constants: mu_c={self.mu_c:.4g}, l_c={self.l_c:.4g}, zeta={self.zeta:.4g}")

    @property
    def N(self) -> int:
        return self.costs.N

    @property
    def m(self) -> int:
        return self.canonical.m

    @property
    def p(self) -> int:
        return self.canonical.p

    def zpath(self, z: np.ndarray) -> ZPath:
        z = np.asarray(z, dtype=float).reshape(self.N, self.m)
        return ZPath(z=z, history=self.history.copy())

    def _full(self, z) -> np.ndarray:
        if isinstance(z, ZPath):
            z = z.z
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(-1, self.m)
        if z.shape[0] != self.N:
            raise LengthMismatch(self.N, z.shape[0])
        return np.vstack([self.history, z])

    def _states_and_controls(self, full: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        canonical, p, N = self.canonical, self.p, self.N
        stages = np.arange(N + 1)
        rows = stages[:, None] + p - 1 - canonical.row_lag[None, :]
        states = full[rows, canonical.row_block[None, :]]
        controls = full[p:p + N] - states[:N] @ canonical.A_I.T
        return states, controls

    def trajectory(self, z) -> Trajectory:
        """Feasible trajectory induced by z together with its cost."""
        states, controls = self._states_and_controls(self._full(z))
        return Trajectory(states=states, controls=controls, cost=self.costs.evaluate(states, controls))

    def value(self, z) -> float:
        return self.trajectory(z).cost

    def gradient(self, z) -> np.ndarray:
        """Full gradient dC/dz_1..z_N as an (N, m) array."""
        canonical, p, N = self.canonical, self.p, self.N
        full = self._full(z)
        states, controls = self._states_and_controls(full)
        grad_u = np.array([g.gradient(u) for g, u in zip(self.costs.control_costs, controls)])
        grad_x = np.array([f.gradient(x) for f, x in zip(self.costs.state_costs, states)])
        grad_x[:N] -= grad_u @ canonical.A_I

        grad_full = np.zeros_like(full)
        stages = np.arange(N + 1)
        rows = stages[:, None] + p - 1 - canonical.row_lag[None, :]
        cols = np.broadcast_to(canonical.row_block[None, :], rows.shape)
        np.add.at(grad_full, (rows, cols), grad_x)
        grad_full[p:p + N] += grad_u
        return grad_full[p:]

    def linear_system(self) -> Tuple[np.ndarray, np.ndarray, float]:
        """
        For quadratic costs, (H, eta, c) with C(z) = 1/2 z^T H z - eta^T z + c over the
        flattened z.
        """
        size = self.N * self.m
        zero = np.zeros(size)
        g0 = self.gradient(zero).ravel()
        H = np.empty((size, size))
        for i in range(size):
            e = np.zeros(size)
            e[i] = 1.0
            H[:, i] = self.gradient(e).ravel() - g0
        H = 0.5 * (H + H.T)
        return H, -g0, self.value(zero)


def total_cost(zpath: ZPath, zcost: ZCost) -> float:
    """C(z), equal to the cost of the induced trajectory."""
    if zpath.N != zcost.N:
        raise LengthMismatch(zcost.N, zpath.N)
    return zcost.value(zpath.z)


def trajectory_of(zpath: ZPath, zcost: ZCost) -> Trajectory:
    if zpath.N != zcost.N:
        raise LengthMismatch(zcost.N, zpath.N)
    return zcost.trajectory(zpath.z)


def partial_gradient(
    t: int,
    local: np.ndarray,
    costs: CostSource,
    canonical: CanonicalSystem,
    N: Optional[int] = None,
) -> np.ndarray:
    """
    dC/dz_t from the local window z_{t-p}..z_{t+p}.

    Only f_s for s in [t, t+p-1] and g_s for s in [t-1, t+p-1] depend on z_t; stages outside
    [0, N] (respectively [0, N-1]) do not exist and are skipped.

    Args:
        t: Stage index in [1, N]
        local: Array of shape (2p+1, m)
        costs: Cost sequence or information-gated provider
        canonical: Canonical system
        N: Horizon, defaults to costs.N

    Returns:
        The partial gradient in R^m
    """
    N = costs.N if N is None else N
    p, m = canonical.p, canonical.m
    if not 1 <= t <= N:
        raise StageOutOfRange(t, 1, N)
    local = np.atleast_2d(np.asarray(local, dtype=float))
    if local.shape[0] < 2 * p + 1:
        raise WindowTooShort(2 * p + 1, local.shape[0])

    lag, block, A_I = canonical.row_lag, canonical.row_block, canonical.A_I
    grad = np.zeros(m)
    # local row of z_s is s - t + p
    for s in range(max(t - 1, 0), min(t + p - 1, N) + 1):
        x_s = local[s - t + p - lag, block]
        dx = np.zeros(canonical.n)
        if s >= t:
            dx += costs.state_cost(s).gradient(x_s)
        if s <= N - 1:
            u_s = local[s + 1 - t + p] - A_I @ x_s
            du = costs.control_cost(s).gradient(u_s)
            dx -= A_I.T @ du
            if s + 1 == t:
                grad += du
        touches = (s - lag) == t
        np.add.at(grad, block[touches], dx[touches])
    return grad
