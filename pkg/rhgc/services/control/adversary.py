"""
Hard LQ tracking instances for online control with lookahead.

A single-input cyclic system of dimension n = p tracks targets that stay constant on epochs
and flip to fresh random sign patterns between them. Its C(z) is a block tridiagonal quadratic
whose inverse decays like rho^|i-j| with rho = (sqrt(zeta)-1)/(sqrt(zeta)+1), which limits how
much any controller can learn from W-step lookahead.
"""
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple
import logging
import math

import numpy as np
import pandas as pd
from scipy import stats

from rhgc.core.errors import InadmissibleParameters, NonIntegerHorizonRatio
from rhgc.schemas.reports import VerificationReport
from rhgc.services.control.algorithms import OnlineRun, dynamic_regret, foss_run, bound_factor
from rhgc.services.control.baselines import offline_optimal
from rhgc.services.control.canonical import CanonicalSystem, verify_canonical
from rhgc.services.control.lqt import QuadraticInstance, solve_dare
from rhgc.services.control.reformulate import ZCost

# Configure logging
logger = logging.getLogger(__name__)

RANDOM_ALGORITHM = "numpy.random.default_rng/PCG64"


@dataclass
class LowerBoundInstance:
    """One member of the lower-bound family."""
    n: int
    canonical: CanonicalSystem
    delta: float
    P_e: np.ndarray
    theta: np.ndarray  # (N+1, n)
    sigma: float
    Delta: int
    E: int
    J_set: Tuple[int, ...]
    L_N: float
    zeta: float
    theta_bar: float
    N: int
    seed: int
    random_algorithm: str = RANDOM_ALGORITHM

    @property
    def p(self) -> int:
        return self.n

    @property
    def rho(self) -> float:
        return (math.sqrt(self.zeta) - 1.0) / (math.sqrt(self.zeta) + 1.0)

    @property
    def variation(self) -> float:
        """sum_{t=0}^{N} ||theta_t - theta_{t-1}|| with theta_{-1} = 0."""
        previous = np.vstack([np.zeros((1, self.n)), self.theta[:-1]])
        return float(np.sum(np.linalg.norm(self.theta - previous, axis=1)))

    def quadratic_instance(self) -> QuadraticInstance:
        N, n = self.N, self.n
        return QuadraticInstance(
            canonical=self.canonical,
            Q=np.repeat((self.delta * np.eye(n))[None], N, axis=0),
            R=np.ones((N, 1, 1)),
            theta=self.theta,
            Q_N=self.P_e,
        )

    def zcost(self) -> ZCost:
        return ZCost(self.canonical, self.quadratic_instance().to_costs())


def cyclic_system(n: int) -> CanonicalSystem:
    """Superdiagonal ones with a one in the bottom-left corner, actuated at the last row."""
    A = np.eye(n, k=1)
    A[n - 1, 0] = 1.0
    B = np.zeros((n, 1))
    B[n - 1, 0] = 1.0
    return verify_canonical(A, B)


def build_instance(zeta: float, p: int, N: int, L_N: float, theta_bar: float, seed: int) -> LowerBoundInstance:
    """
    Build a lower-bound instance.

    Args:
        zeta: Target condition number (> 1)
        p: Controllability index, equal to the state dimension
        N: Horizon
        L_N: Budget on the path length of the targets
        theta_bar: Norm of every nonzero target
        seed: Seed of the random sign patterns

    Returns:
        LowerBoundInstance

    Raises:
        InadmissibleParameters: naming the violated hypothesis
    """
    if not zeta > 1:
        raise InadmissibleParameters(f"zeta must exceed 1, got {zeta}")
    if p < 1:
        raise InadmissibleParameters(f"p must be >= 1, got {p}")
    if N < 2:
        raise InadmissibleParameters(f"N must be >= 2, got {N}")
    if not theta_bar > 0:
        raise InadmissibleParameters(f"theta_bar must be positive, got {theta_bar}")
    if L_N < 4 * theta_bar:
        raise InadmissibleParameters(f"L_N={L_N} below 4*theta_bar={4 * theta_bar}")
    if L_N > (2 * N + 1) * theta_bar:
        raise InadmissibleParameters(f"L_N={L_N} above (2N+1)*theta_bar={(2 * N + 1) * theta_bar}")

    n = p
    delta = 4.0 / ((zeta - 1.0) * p)
    canonical = cyclic_system(n)
    P_e = solve_dare(delta * np.eye(n), np.eye(1), canonical)

    sigma = theta_bar / math.sqrt(n)
    Delta = math.ceil((N - 1) / math.floor(L_N / (2 * theta_bar)))
    E = math.ceil((N - 1) / Delta)
    J_set = tuple(1 + k * Delta for k in range(E))

    rng = np.random.default_rng(seed)
    signs = rng.choice(np.array([-1.0, 1.0]), size=(E, n))
    theta = np.zeros((N + 1, n))
    for k, start in enumerate(J_set):
        stop = min(start + Delta, N)
        theta[start:stop] = sigma * signs[k]

    instance = LowerBoundInstance(
        n=n, canonical=canonical, delta=delta, P_e=P_e, theta=theta, sigma=sigma,
        Delta=Delta, E=E, J_set=J_set, L_N=L_N, zeta=zeta, theta_bar=theta_bar, N=N, seed=seed,
    )
    logger.debug(
        f"Lower-bound instance: n={n}, delta={delta:.4g}, Delta={Delta}, E={E}, "
        f"variation={instance.variation:.4g} (budget {L_N})"
    )
    return instance


@dataclass
class QuadraticSystemForm:
    """C(z) = 1/2 z^T H z - eta^T z + constant for a lower-bound instance."""
    H: np.ndarray
    eta: np.ndarray
    constant: float
    rho: float
    z_star: np.ndarray


def assemble_h_system(instance: LowerBoundInstance) -> QuadraticSystemForm:
    """
    Assemble H and eta stage by stage.

    With u_{t-1} = z_t - z_{t-n}, the diagonal collects delta for every f_s with s in
    [t, t+n-1] before N, one for g_{t-1}, one more for g_{t+n-1} when it exists and the
    terminal weight P_e on the last n stages. Coupling entries are -1 at distance n.
    """
    N, n, delta = instance.N, instance.n, instance.delta
    theta = instance.theta
    H = np.zeros((N, N))
    eta = np.zeros(N)
    for t in range(1, N + 1):
        i = t - 1
        for s in range(t, min(t + n - 1, N - 1) + 1):
            H[i, i] += delta
            eta[i] += delta * theta[s, n - 1 - (s - t)]
        H[i, i] += 1.0
        if t + n <= N:
            H[i, i] += 1.0
            H[i, i + n] -= 1.0
            H[i + n, i] -= 1.0
    # terminal cost 1/2 x_N^T P_e x_N, x_N[r] = z_{N-(n-1-r)}
    last = np.arange(N - n, N)
    valid = last >= 0
    rows = np.arange(n)[valid]
    H[np.ix_(last[valid], last[valid])] += instance.P_e[np.ix_(rows, rows)]
    constant = 0.5 * delta * float(np.sum(theta[:N] ** 2))
    z_star = np.linalg.solve(H, eta)
    return QuadraticSystemForm(H=H, eta=eta, constant=constant, rho=instance.rho, z_star=z_star)


def verify_pe_form(instance: LowerBoundInstance) -> VerificationReport:
    """Structure of the Riccati solution: diagonal, spacing delta, and the closed form of q_n."""
    n, delta, P_e = instance.n, instance.delta, instance.P_e
    q = np.diag(P_e)
    report = VerificationReport(title=f"Riccati structure n={n}, delta={delta:.4g}")
    off_diagonal = float(np.max(np.abs(P_e - np.diag(q)))) if n > 1 else 0.0
    report.add("diagonal", off_diagonal <= 1e-8, measured=off_diagonal, threshold=1e-8)
    spacing = float(np.max(np.abs(np.diff(q) - delta))) if n > 1 else 0.0
    report.add("spacing", spacing <= 1e-8, measured=spacing, threshold=1e-8)
    report.add("q1 bracket", delta < q[0] < delta + 1.0, detail=f"q_1={q[0]:.10g}", measured=float(q[0]))
    closed_form = (n * delta + math.sqrt(n ** 2 * delta ** 2 + 4 * n * delta)) / 2.0
    gap = abs(q[-1] - closed_form)
    report.add("q_n closed form", gap <= 1e-8, detail=f"q_n={q[-1]:.12g}, closed form {closed_form:.12g}",
               measured=gap, threshold=1e-8)
    return report


def verify_y_decay(instance: LowerBoundInstance) -> VerificationReport:
    """
    Inverse structure of H: Y = H^{-1} = (y_ij I_n) and y_{t,t+tau} >= (1-rho)/(delta n+2) rho^tau.

    Raises:
        NonIntegerHorizonRatio: when N is not a multiple of n
    """
    N, n, delta = instance.N, instance.n, instance.delta
    if N % n:
        raise NonIntegerHorizonRatio(N, n)
    system = assemble_h_system(instance)
    Y = np.linalg.inv(system.H)
    blocks = N // n
    report = VerificationReport(title=f"Inverse decay n={n}, N={N}, zeta={instance.zeta:g}")

    # stage t sits at index (i-1) n + a for block i and position a
    Y4 = Y.reshape(blocks, n, blocks, n)
    y_bar = np.einsum("iaja->ij", Y4) / n
    pattern = np.einsum("ij,ab->iajb", y_bar, np.eye(n))
    deviation = float(np.max(np.abs(Y4 - pattern)))
    report.add("block structure", deviation <= 1e-10, measured=deviation, threshold=1e-10)
    report.add("positive entries", bool(np.all(y_bar > 0)), measured=float(np.min(y_bar)))

    rho = instance.rho
    slack = np.inf
    for t in range(blocks):
        for tau in range(blocks - t):
            bound = (1.0 - rho) / (delta * n + 2.0) * rho ** tau
            slack = min(slack, y_bar[t, t + tau] - bound)
    report.add("decay bound", slack >= -1e-12, measured=float(slack), threshold=-1e-12)

    eigenvalues = np.linalg.eigvalsh(system.H)
    inside = eigenvalues[0] >= delta * n - 1e-9 and eigenvalues[-1] <= delta * n + 4 + 1e-9
    report.add("spectrum", inside, detail=f"[{eigenvalues[0]:.6g}, {eigenvalues[-1]:.6g}]",
               measured=float(eigenvalues[-1] / eigenvalues[0]), threshold=instance.zeta)
    return report


@dataclass
class LowerBoundStudy:
    """Regret of an algorithm on the lower-bound family, one row per K."""
    table: pd.DataFrame
    c1: float
    slope: float
    rho: float
    rate_bracket: Tuple[float, float]


def empirical_lower_bound(
    algorithm: Callable[[ZCost, int], OnlineRun],
    algorithm_name: str,
    zeta: float,
    p: int,
    N: int,
    L_N: float,
    theta_bar: float,
    seeds: Sequence[int],
    K_values: Sequence[int],
) -> LowerBoundStudy:
    """
    Mean regret over seeds for W = K p + 1, next to the upper bound from the measured FOSS regret
    and the reference c1 rho^{2K} L_N.

    Args:
        algorithm: Runner taking (zcost, W)
        algorithm_name: Name used for the bound factor
        zeta, p, N, L_N, theta_bar: Family parameters
        seeds: Instance seeds
        K_values: Inner iteration counts to evaluate

    Returns:
        LowerBoundStudy with c1 fitted as the largest constant keeping the reference below the
        mean regret, and the slope of log mean regret against K
    """
    rows: List[Dict[str, float]] = []
    per_seed = []
    for seed in seeds:
        instance = build_instance(zeta, p, N, L_N, theta_bar, seed)
        zcost = instance.zcost()
        J_star = offline_optimal(zcost).J_star
        foss_regret = dynamic_regret(foss_run(zcost), J_star, zcost.zeta).regret
        per_seed.append((zcost, J_star, foss_regret))

    rho = (math.sqrt(zeta) - 1.0) / (math.sqrt(zeta) + 1.0)
    for K in K_values:
        W = K * p + 1
        if W > N / 3:
            logger.warning(f"W={W} exceeds N/3={N / 3:.3g}; outside the admissible lookahead range")
        regrets, uppers, fosses = [], [], []
        for zcost, J_star, foss_regret in per_seed:
            report = dynamic_regret(algorithm(zcost, W), J_star, zcost.zeta)
            regrets.append(report.regret)
            fosses.append(foss_regret)
            uppers.append(bound_factor(algorithm_name, zcost.zeta, K) * foss_regret)
        rows.append({
            "K": K,
            "W": W,
            "mean_regret": float(np.mean(regrets)),
            "mean_foss_regret": float(np.mean(fosses)),
            "upper_bound": float(np.mean(uppers)),
            "rate_reference": rho ** (2 * K) * L_N,
        })
    table = pd.DataFrame(rows)
    c1 = float((table["mean_regret"] / table["rate_reference"]).min())
    table["lower_reference"] = c1 * table["rate_reference"]

    positive = table[table["mean_regret"] > 0]
    slope = float("nan")
    if len(positive) >= 2:
        slope = float(stats.linregress(positive["K"], np.log(positive["mean_regret"])).slope)
    bracket = (2 * math.log(rho), 2 * math.log((math.sqrt(zeta) - 1.0) / math.sqrt(zeta)))
    logger.info(f"Lower-bound study {algorithm_name}: c1={c1:.4g}, slope={slope:.4g}, bracket={bracket}")
    return LowerBoundStudy(table=table, c1=c1, slope=slope, rho=rho, rate_bracket=bracket)
