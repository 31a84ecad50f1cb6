"""
Numeric invariant suite behind the `verify` command.

Each check runs at fixed desk-scale parameters and records a CheckResult; failures are reported,
never raised, so one broken invariant does not hide the others.
"""
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Tuple
import logging
import time

import numpy as np

from rhgc.core.errors import NonIntegerHorizonRatio, RhgcError
from rhgc.schemas.reports import VerificationReport
from rhgc.services.control.adversary import build_instance, verify_pe_form, verify_y_decay
from rhgc.services.control.algorithms import (
    compute_stepsizes,
    dynamic_regret,
    foss_run,
    rhgd_bound_factor,
    rhgd_run,
    rhtm_bound_factor,
    rhtm_run,
)
from rhgc.services.control.baselines import offline_optimal
from rhgc.services.control.canonical import LtiSystem, to_canonical
from rhgc.services.control.engine import batch_momentum
from rhgc.services.control.lqt import QuadraticInstance, bias_function, random_quadratic_instance
from rhgc.services.control.reformulate import ZCost, partial_gradient
from rhgc.services.experiments.instances import random_controllable_system

# Configure logging
logger = logging.getLogger(__name__)

# The system of the shipped LQT sweep: lower row read as (-1/6, 5/6)
SWEEP_A = np.array([[0.0, 1.0], [-1.0 / 6.0, 5.0 / 6.0]])
SWEEP_B = np.array([[0.0], [1.0]])


@dataclass(frozen=True)
class SuiteParameters:
    instances: int = 20
    horizon: int = 40
    windows: Tuple[int, ...] = tuple(range(1, 14))
    equivalence_instances: int = 10
    constant_instances: int = 10
    gradient_triples: int = 1000
    seed: int = 0

    @classmethod
    def quick(cls) -> "SuiteParameters":
        return cls(instances=3, horizon=20, windows=(1, 2, 3, 5, 9), equivalence_instances=2,
                   constant_instances=2, gradient_triples=50)


def random_zcost(rng: np.random.Generator, N: int, n: Optional[int] = None, m: Optional[int] = None) -> Tuple[ZCost, QuadraticInstance]:
    """Random controllable system with n in {2,3,4}, m in {1,2} and random LQT costs."""
    n = int(rng.integers(2, 5)) if n is None else n
    m = int(rng.integers(1, 3)) if m is None else m
    canonical = to_canonical(random_controllable_system(n, min(m, n), rng))
    instance = random_quadratic_instance(canonical, N, rng)
    return ZCost(canonical, instance.to_costs()), instance


def _padded(zcost: ZCost, z: np.ndarray) -> np.ndarray:
    """Rows for stages 1-p..N+p: history, z, zeros."""
    p = zcost.p
    return np.vstack([zcost.history, z, np.zeros((p, zcost.m))])


def check_regret_bounds(report: VerificationReport, params: SuiteParameters, rng: np.random.Generator) -> None:
    """
    Regret(RHGD) and Regret(RHTM) against their multiples of Regret(FOSS), plus the agreement
    of the dynamic-programming optimum with a direct minimization of C(z).
    """
    worst = -np.inf
    worst_offline = 0.0
    for _ in range(params.instances):
        zcost, _ = random_zcost(rng, params.horizon)
        dp = offline_optimal(zcost, method="dp")
        direct = offline_optimal(zcost, method="batch_tm")
        worst_offline = max(worst_offline, abs(dp.J_star - direct.J_star) / max(1.0, abs(dp.J_star)))
        J_star = dp.J_star
        tolerance = 1e-9 + 1e-10 * abs(J_star)
        foss = dynamic_regret(foss_run(zcost), J_star, zcost.zeta).regret
        for W in params.windows:
            K = (W - 1) // zcost.p
            rhgd = rhgd_run(zcost, W).cost - J_star
            rhtm = rhtm_run(zcost, W).cost - J_star
            worst = max(worst, rhgd - rhgd_bound_factor(zcost.zeta, K) * foss - tolerance,
                        rhtm - rhtm_bound_factor(zcost.zeta, K) * foss - tolerance)
    report.add("regret bounds", worst <= 0.0, detail="max(regret - bound - tolerance)", measured=float(worst), threshold=0.0)
    report.add("offline equivalence", worst_offline <= 1e-8, detail="dp vs batch triple momentum",
               measured=worst_offline, threshold=1e-8)


def check_canary(report: VerificationReport) -> None:
    """
    Doubling the gradient step on a scalar integrator must break the RHGD bound; a suite that
    passes this check is not measuring anything.
    """
    rng = np.random.default_rng(12345)
    canonical = to_canonical(LtiSystem(A=np.array([[1.0]]), B=np.array([[1.0]])))
    N = 100
    instance = QuadraticInstance(
        canonical=canonical, Q=np.ones((N, 1, 1)), R=np.ones((N, 1, 1)),
        theta=rng.uniform(-10.0, 10.0, size=(N + 1, 1)), Q_N=np.eye(1),
    )
    zcost = ZCost(canonical, instance.to_costs())
    J_star = offline_optimal(zcost, method="dp").J_star
    foss = foss_run(zcost).cost - J_star
    stepsizes = compute_stepsizes(zcost.l_c, zcost.zeta)
    doubled = replace(stepsizes, gamma_g=2.0 * stepsizes.gamma_g)
    W = 61
    regret = rhgd_run(zcost, W, stepsizes=doubled).cost - J_star
    bound = rhgd_bound_factor(zcost.zeta, W - 1) * foss
    report.add("canary: doubled step violates bound", regret > bound + 1e-9,
               detail=f"regret {regret:.6g} vs bound {bound:.6g}", measured=float(regret), threshold=float(bound))


def check_online_batch(report: VerificationReport, params: SuiteParameters, rng: np.random.Generator) -> None:
    """Online z(K) equals K batch iterations from the same z(0)."""
    worst = 0.0
    for _ in range(params.equivalence_instances):
        zcost, _ = random_zcost(rng, params.horizon)
        stepsizes = compute_stepsizes(zcost.l_c, zcost.zeta)
        p = zcost.p
        for W in (p + 1, 2 * p + 1, 3 * p + 1):
            K = (W - 1) // p
            for run_fn, rule in ((rhgd_run, stepsizes.gradient_rule), (rhtm_run, stepsizes.triple_momentum_rule)):
                run = run_fn(zcost, W)
                batch = batch_momentum(zcost.gradient, run.z_initial.z, rule, K)
                worst = max(worst, float(np.max(np.abs(run.z_final.z - batch))))
    report.add("online/batch equivalence", worst <= 1e-10, measured=worst, threshold=1e-10)


def check_hessian_constants(report: VerificationReport, params: SuiteParameters, rng: np.random.Generator) -> None:
    """Eigenvalues of the Hessian of C(z) lie in [mu_f, l_c]."""
    worst = -np.inf
    for _ in range(params.constant_instances):
        zcost, _ = random_zcost(rng, params.horizon)
        H, _, _ = zcost.linear_system()
        eigenvalues = np.linalg.eigvalsh(H)
        worst = max(worst, zcost.costs.mu_f - 1e-9 - eigenvalues[0], eigenvalues[-1] - zcost.l_c - 1e-9)
    report.add("Hessian constants", worst <= 0.0, measured=float(worst), threshold=0.0)


def check_partial_gradients(report: VerificationReport, params: SuiteParameters, rng: np.random.Generator) -> None:
    """partial_gradient against central differences of C(z) with step 1e-6."""
    worst = 0.0
    zcosts = [random_zcost(rng, params.horizon)[0] for _ in range(10)]
    step = 1e-6
    for k in range(params.gradient_triples):
        zcost = zcosts[k % len(zcosts)]
        z = rng.uniform(-10.0, 10.0, size=(zcost.N, zcost.m))
        t = int(rng.integers(1, zcost.N + 1))
        padded = _padded(zcost, z)
        local = padded[t - 1:t + 2 * zcost.p]
        grad = partial_gradient(t, local, zcost.costs, zcost.canonical)
        numeric = np.zeros(zcost.m)
        for i in range(zcost.m):
            shifted = z.copy()
            shifted[t - 1, i] += step
            plus = zcost.value(shifted)
            shifted[t - 1, i] -= 2 * step
            minus = zcost.value(shifted)
            numeric[i] = (plus - minus) / (2 * step)
        worst = max(worst, float(np.linalg.norm(grad - numeric) / max(1.0, np.linalg.norm(grad))))
    report.add("partial gradients", worst <= 1e-5, measured=worst, threshold=1e-5)


def check_lower_bound_offline(report: VerificationReport) -> None:
    """On lower-bound instances the DP optimum also matches the H z = eta solve."""
    worst = 0.0
    for seed in range(3):
        instance = build_instance(5.0, 2, 30, 8.0, 1.0, seed)
        solution = offline_optimal(instance.zcost(), method="dp")
        worst = max(worst, solution.cross_check if solution.cross_check is not None else np.inf)
    report.add("lower-bound offline equivalence", worst <= 1e-8, measured=float(worst), threshold=1e-8)


def check_riccati_structure(report: VerificationReport) -> None:
    for zeta in (2.0, 5.0, 10.0):
        for p in (1, 2, 3, 4):
            N = 12 * p
            sub = verify_pe_form(build_instance(zeta, p, N, 4.0, 1.0, 0))
            passed = sub.passed
            detail = "; ".join(f"{c.name}={c.measured}" for c in sub.checks if not c.passed)
            report.add(f"Riccati structure zeta={zeta:g}, p={p}", passed, detail=detail)


def check_inverse_decay(report: VerificationReport, cases: Optional[List[Tuple[int, int]]] = None) -> None:
    cases = [(1, 20), (2, 40), (3, 30)] if cases is None else cases
    for zeta in (2.0, 5.0):
        for n, N in cases:
            name = f"inverse decay zeta={zeta:g}, n={n}, N={N}"
            try:
                sub = verify_y_decay(build_instance(zeta, n, N, 4.0, 1.0, 0))
            except NonIntegerHorizonRatio as e:
                report.skip(name, str(e))
                continue
            detail = "; ".join(f"{c.name}={c.measured}" for c in sub.checks if not c.passed)
            report.add(name, sub.passed, detail=detail)


def check_foss_constant_regret(report: VerificationReport) -> None:
    """
    With time-invariant costs whose terminal cost is the bias function, Regret(FOSS) does not
    grow with the horizon.
    """
    canonical = to_canonical(LtiSystem(A=SWEEP_A, B=SWEEP_B))
    Q = np.diag([1.3, 1.7])
    R = np.array([[1.2]])
    theta = np.array([4.0, -3.0])
    bias = bias_function(Q, R, theta, canonical)
    regrets = []
    for N in (30, 300):
        instance = QuadraticInstance(
            canonical=canonical,
            Q=np.repeat(Q[None], N, axis=0),
            R=np.repeat(R[None], N, axis=0),
            theta=np.vstack([np.tile(theta, (N, 1)), bias.beta_e[None]]),
            Q_N=bias.P_e,
        )
        zcost = ZCost(canonical, instance.to_costs())
        J_star = offline_optimal(zcost, method="dp").J_star
        regrets.append(foss_run(zcost).cost - J_star)
    gap = abs(regrets[1] - regrets[0])
    threshold = 1e-6 * (1.0 + regrets[0])
    report.add("FOSS regret independent of N", gap <= threshold,
               detail=f"N=30: {regrets[0]:.10g}, N=300: {regrets[1]:.10g}", measured=gap, threshold=threshold)


def _guarded(report: VerificationReport, name: str, check: Callable[[], None]) -> None:
    start = time.perf_counter()
    try:
        check()
    except (RhgcError, ValueError, np.linalg.LinAlgError) as e:
        logger.error(f"Check '{name}' raised: {str(e)}")
        report.add(name, False, detail=f"raised {type(e).__name__}: {str(e)}")
    logger.info(f"Check group '{name}' finished in {time.perf_counter() - start:.1f}s")


def verify_suite(params: Optional[SuiteParameters] = None) -> VerificationReport:
    """
    Run every invariant battery.

    Args:
        params: Sizes of the randomized checks, full desk scale by default

    Returns:
        VerificationReport; report.passed is False if any check failed
    """
    params = SuiteParameters() if params is None else params
    rng = np.random.default_rng(params.seed)
    report = VerificationReport(title="rhgc verification suite")
    _guarded(report, "regret bounds", lambda: check_regret_bounds(report, params, rng))
    _guarded(report, "canary", lambda: check_canary(report))
    _guarded(report, "online/batch equivalence", lambda: check_online_batch(report, params, rng))
    _guarded(report, "Hessian constants", lambda: check_hessian_constants(report, params, rng))
    _guarded(report, "partial gradients", lambda: check_partial_gradients(report, params, rng))
    _guarded(report, "lower-bound offline", lambda: check_lower_bound_offline(report))
    _guarded(report, "Riccati structure", lambda: check_riccati_structure(report))
    _guarded(report, "inverse decay", lambda: check_inverse_decay(report))
    _guarded(report, "FOSS constant regret", lambda: check_foss_constant_regret(report))
    failed = [c.name for c in report.checks if not c.passed and not c.skipped]
    if failed:
        logger.error(f"Verification failed: {failed}")
    else:
        logger.info(f"Verification passed ({len(report.checks)} checks)")
    return report
