"""
Controllability analysis and the Luenberger canonical form.

A pair (A, B) is canonical when B has a single unit entry per column, at the actuated rows
k_1 < ... < k_m (with k_m the last row), and every non-actuated row of A is a unit shift row.
Row indices are stored 0-based.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple
import logging

import numpy as np
import scipy.linalg

from rhgc.core.config import settings
from rhgc.core.errors import (
    DimensionMismatch,
    IllConditioned,
    NotCanonical,
    NotControllable,
    SingularTransform,
)
from rhgc.services.control.costs import CostSequence

# Configure logging
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LtiSystem:
    """Linear time-invariant system x_{t+1} = A x_t + B u_t."""
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got shape {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        if B.shape[1] < 1 or B.shape[1] > A.shape[0]:
            raise DimensionMismatch(f"Input dimension {B.shape[1]} must lie in [1, {A.shape[0]}]")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.A @ x + self.B @ u

    def controllability_matrix(self) -> np.ndarray:
        """[B, AB, ..., A^{n-1} B]"""
        blocks = [self.B]
        for _ in range(self.n - 1):
            blocks.append(self.A @ blocks[-1])
        return np.hstack(blocks)


@dataclass(frozen=True)
class CanonicalSystem:
    """A canonical-form pair together with the transform from the original coordinates."""
    A_hat: np.ndarray
    B_hat: np.ndarray
    S_x: np.ndarray
    S_u: np.ndarray
    indices: Tuple[int, ...]
    p_list: Tuple[int, ...]
    # Row bookkeeping: x_t[r] = z_{t - lag[r]}[block[r]]
    row_block: np.ndarray = field(init=False, repr=False)
    row_lag: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        block = np.empty(self.n, dtype=int)
        lag = np.empty(self.n, dtype=int)
        start = 0
        for i, k in enumerate(self.indices):
            rows = np.arange(start, k + 1)
            block[rows] = i
            lag[rows] = k - rows
            start = k + 1
        object.__setattr__(self, "row_block", block)
        object.__setattr__(self, "row_lag", lag)

    @property
    def n(self) -> int:
        return self.A_hat.shape[0]

    @property
    def m(self) -> int:
        return self.B_hat.shape[1]

    @property
    def p(self) -> int:
        """Controllability index."""
        return max(self.p_list)

    @property
    def A_I(self) -> np.ndarray:
        """Actuated rows A(I, :) of the canonical state matrix."""
        return self.A_hat[list(self.indices), :]

    @property
    def S_x_inv(self) -> np.ndarray:
        return np.linalg.inv(self.S_x)

    @property
    def S_u_inv(self) -> np.ndarray:
        return np.linalg.inv(self.S_u)

    @property
    def replication(self) -> np.ndarray:
        """n x m map F_1 with x = F_1 z for steady states."""
        F_1 = np.zeros((self.n, self.m))
        F_1[np.arange(self.n), self.row_block] = 1.0
        return F_1

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.A_hat @ x + self.B_hat @ u

    def to_original(self, states: np.ndarray, controls: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Map canonical states/controls (one per row) back to the original coordinates."""
        return states @ self.S_x_inv.T, controls @ self.S_u_inv.T


def _is_close(value: float, expected: float, tolerance: float) -> bool:
    return abs(value - expected) <= tolerance


def verify_canonical(A: np.ndarray, B: np.ndarray, tolerance: Optional[float] = None) -> CanonicalSystem:
    """
    Check whether (A, B) already has the canonical sparsity pattern.

    Args:
        A: n x n state matrix
        B: n x m input matrix
        tolerance: Absolute entry tolerance, defaults to settings.ENTRY_TOLERANCE

    Returns:
        CanonicalSystem with identity transforms

    Raises:
        NotCanonical: naming the first entry that breaks the pattern
        DimensionMismatch: for inconsistent shapes
    """
    tolerance = settings.ENTRY_TOLERANCE if tolerance is None else tolerance
    system = LtiSystem(A, B)
    A, B = system.A, system.B
    n, m = system.n, system.m

    # Columns of B: exactly one unit entry, actuated rows strictly increasing
    indices: List[int] = []
    for j in range(m):
        nonzero = [r for r in range(n) if not _is_close(B[r, j], 0.0, tolerance)]
        if len(nonzero) != 1:
            row = nonzero[1] if len(nonzero) > 1 else n - 1
            raise NotCanonical(row, j, matrix="B", value=float(B[row, j]))
        k = nonzero[0]
        if not _is_close(B[k, j], 1.0, tolerance):
            raise NotCanonical(k, j, matrix="B", value=float(B[k, j]))
        if indices and k <= indices[-1]:
            raise NotCanonical(k, j, matrix="B", value=float(B[k, j]))
        indices.append(k)
    if indices[-1] != n - 1:
        raise NotCanonical(indices[-1], m - 1, matrix="B", value=float(B[indices[-1], m - 1]))

    actuated = set(indices)
    for r in range(n):
        if r in actuated:
            continue
        for c in range(n):
            expected = 1.0 if c == r + 1 else 0.0
            if not _is_close(A[r, c], expected, tolerance):
                raise NotCanonical(r, c, matrix="A", value=float(A[r, c]))

    p_list = tuple(int(k - prev) for k, prev in zip(indices, [-1] + indices[:-1]))
    return CanonicalSystem(
        A_hat=A.copy(),
        B_hat=B.copy(),
        S_x=np.eye(n),
        S_u=np.eye(m),
        indices=tuple(indices),
        p_list=p_list,
    )


def controllability_rank(system: LtiSystem) -> int:
    """Numerical rank with threshold n * eps * sigma_max."""
    singular_values = scipy.linalg.svdvals(system.controllability_matrix())
    if singular_values[0] == 0.0:
        return 0
    threshold = system.n * np.finfo(float).eps * singular_values[0]
    return int(np.sum(singular_values > threshold))


def _select_chains(system: LtiSystem, pivot_tolerance: float) -> Tuple[List[int], np.ndarray]:
    """
    Pick the Luenberger basis by scanning b_1..b_m, A b_1..A b_m, ... and keeping each vector
    that is independent of those already kept. Once A^j b_i is dependent the chain of input i
    stops.

    Returns:
        chain lengths p_i and the basis M ordered chain by chain
    """
    n, m = system.n, system.m
    chains: List[List[np.ndarray]] = [[] for _ in range(m)]
    stopped = [False] * m
    basis = np.zeros((n, 0))
    power = system.B.copy()
    for _ in range(n):
        for i in range(m):
            if stopped[i] or basis.shape[1] == n:
                continue
            candidate = power[:, i]
            norm = np.linalg.norm(candidate)
            if basis.shape[1]:
                coeffs, *_ = np.linalg.lstsq(basis, candidate, rcond=None)
                remainder = candidate - basis @ coeffs
            else:
                remainder = candidate
            if norm == 0.0 or np.linalg.norm(remainder) <= pivot_tolerance * norm:
                stopped[i] = True
                continue
            chains[i].append(candidate)
            basis = np.column_stack([basis, candidate])
        power = system.A @ power
    p_list = [len(chain) for chain in chains]
    ordered = np.column_stack([v for chain in chains for v in chain])
    return p_list, ordered


def _snap(matrix: np.ndarray, pattern: np.ndarray, mask: np.ndarray, tolerance: float, name: str) -> np.ndarray:
    """Replace structural entries with their exact values after checking they are within tolerance."""
    deviation = np.abs(matrix - pattern)[mask]
    if deviation.size and deviation.max() > tolerance:
        logger.error(f"Structural entries of {name} deviate by {deviation.max():.3e}")
        raise IllConditioned(float(deviation.max() / np.finfo(float).eps))
    snapped = matrix.copy()
    snapped[mask] = pattern[mask]
    return snapped


def to_canonical(system: LtiSystem) -> CanonicalSystem:
    """
    Transform a controllable system into Luenberger canonical form.

    Args:
        system: Controllable LTI system

    Returns:
        CanonicalSystem with A_hat = S_x A S_x^{-1} and B_hat = S_x B S_u^{-1}

    Raises:
        NotControllable: when the controllability matrix is rank deficient
        IllConditioned: when the selected basis or the transform is numerically singular
    """
    try:
        canonical = verify_canonical(system.A, system.B)
        logger.debug("System already canonical, using identity transforms")
        return canonical
    except NotCanonical:
        pass

    n, m = system.n, system.m
    rank = controllability_rank(system)
    if rank < n:
        logger.error(f"System not controllable: rank {rank} < {n}")
        raise NotControllable(rank, n)

    if np.linalg.matrix_rank(system.B) < m:
        raise IllConditioned(float(np.linalg.cond(system.B)))

    p_list, M = _select_chains(system, settings.PIVOT_TOLERANCE)
    condition = float(np.linalg.cond(M))
    if condition > settings.MAX_CONDITION:
        logger.error(f"Luenberger basis condition {condition:.3e} above {settings.MAX_CONDITION:.1e}")
        raise IllConditioned(condition)

    M_inv = np.linalg.inv(M)
    sigma = np.cumsum(p_list)
    rows = []
    for k in range(m):
        q_k = M_inv[sigma[k] - 1, :]
        for _ in range(p_list[k]):
            rows.append(q_k)
            q_k = q_k @ system.A
    S_x = np.vstack(rows)
    condition = float(np.linalg.cond(S_x))
    if condition > settings.MAX_CONDITION:
        raise IllConditioned(condition)
    S_x_inv = np.linalg.inv(S_x)

    indices = tuple(int(s) - 1 for s in sigma)
    S_u = (S_x @ system.B)[list(indices), :]
    S_u_inv = np.linalg.inv(S_u)
    A_hat = S_x @ system.A @ S_x_inv
    B_hat = S_x @ system.B @ S_u_inv

    # Exact zeros/ones at structural positions; actuated rows of A_hat stay free
    tolerance = max(
        settings.ENTRY_TOLERANCE,
        1e3 * np.finfo(float).eps * condition * max(1.0, float(np.linalg.norm(system.A, 2))),
    )
    actuated = np.zeros(n, dtype=bool)
    actuated[list(indices)] = True
    A_pattern = np.eye(n, k=1)
    A_mask = np.repeat(~actuated[:, None], n, axis=1)
    B_pattern = np.zeros((n, m))
    B_pattern[list(indices), np.arange(m)] = 1.0
    A_hat = _snap(A_hat, A_pattern, A_mask, tolerance, "A_hat")
    B_hat = _snap(B_hat, B_pattern, np.ones((n, m), dtype=bool), tolerance, "B_hat")

    verified = verify_canonical(A_hat, B_hat)
    logger.info(f"Canonical form: actuated rows {verified.indices}, p_list {verified.p_list}")
    return CanonicalSystem(
        A_hat=A_hat,
        B_hat=B_hat,
        S_x=S_x,
        S_u=S_u,
        indices=verified.indices,
        p_list=verified.p_list,
    )


def transform_costs(costs: CostSequence, S_x: np.ndarray, S_u: np.ndarray) -> CostSequence:
    """
    Transport a cost sequence into canonical coordinates.

    f_hat(x_hat) = f(S_x^{-1} x_hat), g_hat(u_hat) = g(S_u^{-1} u_hat), and x_0 maps to S_x x_0.

    Args:
        costs: Costs in the original coordinates
        S_x: State transform
        S_u: Input transform

    Returns:
        Cost sequence in canonical coordinates

    Raises:
        SingularTransform: if S_x or S_u cannot be inverted reliably
    """
    inverses = []
    for name, S in (("S_x", S_x), ("S_u", S_u)):
        S = np.atleast_2d(np.asarray(S, dtype=float))
        if S.shape[0] != S.shape[1] or np.linalg.cond(S) > settings.MAX_CONDITION:
            logger.error(f"Transform {name} is singular or ill-conditioned")
            raise SingularTransform(name)
        inverses.append(np.linalg.inv(S))
    S_x_inv, S_u_inv = inverses
    if np.array_equal(S_x, np.eye(len(S_x_inv))) and np.array_equal(S_u, np.eye(len(S_u_inv))):
        return costs
    return costs.transformed(np.asarray(S_x, dtype=float), S_x_inv, np.asarray(S_u, dtype=float), S_u_inv)
