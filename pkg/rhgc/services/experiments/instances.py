"""
Build problem instances from an experiment configuration.

Every builder is a pure function of (config, seed): the seed feeds numpy's default generator,
so identical configs produce identical instances.
"""
from dataclasses import dataclass, replace
from typing import Optional
import logging

import numpy as np

from rhgc.core.errors import ConfigError, NotControllable
from rhgc.schemas.experiment import CostSpec, ExperimentConfig, InstanceSpec, SystemSpec
from rhgc.services.control.adversary import LowerBoundInstance, build_instance
from rhgc.services.control.canonical import (
    CanonicalSystem,
    LtiSystem,
    controllability_rank,
    to_canonical,
    transform_costs,
)
from rhgc.services.control.costs import CostSequence, PseudoHuberCost, QuadraticCost
from rhgc.services.control.lqt import QuadraticInstance, random_quadratic_instance, solve_dare
from rhgc.services.control.reformulate import ZCost
from rhgc.services.robot.tracking import RobotInstance

# Configure logging
logger = logging.getLogger(__name__)

MAX_SYSTEM_DRAWS = 100


@dataclass
class BuiltInstance:
    """A control instance ready for the online algorithms."""
    zcost: ZCost
    seed: int
    source: str
    quadratic: Optional[QuadraticInstance] = None
    lower_bound: Optional[LowerBoundInstance] = None


def load_matrix(path: str) -> np.ndarray:
    """Plain-text matrix: one row per line, whitespace-separated entries."""
    return np.loadtxt(path, dtype=float, ndmin=2)


def random_controllable_system(n: int, m: int, rng: np.random.Generator) -> LtiSystem:
    """Gaussian (A, B) with A scaled by 1/sqrt(n), redrawn until controllable."""
    if m > n:
        raise ValueError(f"Input dimension {m} exceeds state dimension {n}")
    rank = 0
    for _ in range(MAX_SYSTEM_DRAWS):
        system = LtiSystem(A=rng.standard_normal((n, n)) / np.sqrt(n), B=rng.standard_normal((n, m)))
        rank = controllability_rank(system)
        if rank == n:
            return system
    raise NotControllable(rank, n)


def system_from_spec(spec: SystemSpec, source: str, rng: np.random.Generator) -> LtiSystem:
    if source == "lqt-random":
        return random_controllable_system(spec.n, spec.m, rng)
    A = load_matrix(spec.A_file) if spec.A_file else np.asarray(spec.A, dtype=float)
    B = load_matrix(spec.B_file) if spec.B_file else np.asarray(spec.B, dtype=float)
    return LtiSystem(A=A, B=B)


def random_costs(canonical: CanonicalSystem, N: int, spec: CostSpec, rng: np.random.Generator):
    """
    Stage costs drawn in the original coordinates and transported into canonical ones.

    Weights, targets and x_0 are drawn for the original (A, B) and moved through (S_x, S_u). For
    systems already in canonical form both transforms are the identity and the draws are used
    as they are. The "dare" terminal weight is solved in canonical coordinates from the
    transported last-stage weights.

    Returns:
        (CostSequence, QuadraticInstance or None)
    """
    x0 = None if spec.x0 is None else np.asarray(spec.x0, dtype=float)
    drawn = random_quadratic_instance(
        canonical, N, rng,
        weight_range=(spec.weight_low, spec.weight_high),
        theta_range=(spec.theta_low, spec.theta_high),
        time_invariant=spec.time_invariant,
        terminal="stage",
        x0=x0,
    )
    if spec.kind == "quadratic":
        costs = transform_costs(drawn.to_costs(), canonical.S_x, canonical.S_u)
        quadratic = QuadraticInstance.from_costs(canonical, costs)
        if spec.terminal == "dare":
            quadratic = replace(quadratic, Q_N=solve_dare(quadratic.Q[-1], quadratic.R[-1], canonical))
            costs = quadratic.to_costs()
        return costs, quadratic
    state_costs = [PseudoHuberCost(theta, spec.curvature, spec.scale) for theta in drawn.theta]
    control_costs = [QuadraticCost(R) for R in drawn.R]
    original = CostSequence(state_costs, control_costs, x0=drawn.x0)
    return transform_costs(original, canonical.S_x, canonical.S_u), None


def build_control_instance(instance: InstanceSpec, seed: int) -> BuiltInstance:
    """
    Instance for one seed of a non-robot config.

    Raises:
        ConfigError: for the robot source, which has no canonical-form objective
    """
    if instance.source == "robot":
        raise ConfigError("<config>", "instance.source", "robot instances are built by build_robot_instance")
    if instance.source == "lower-bound":
        spec = instance.lower_bound
        lower = build_instance(spec.zeta, spec.p, instance.N, spec.L_N, spec.theta_bar, seed)
        return BuiltInstance(
            zcost=lower.zcost(), seed=seed, source=instance.source,
            quadratic=lower.quadratic_instance(), lower_bound=lower,
        )

    rng = np.random.default_rng(seed)
    canonical = to_canonical(system_from_spec(instance.system, instance.source, rng))
    costs, quadratic = random_costs(canonical, instance.N, instance.costs, rng)
    zcost = ZCost(canonical, costs)
    logger.debug(f"Built {instance.source} instance for seed {seed}: p={canonical.p}, zeta={zcost.zeta:.4g}")
    return BuiltInstance(zcost=zcost, seed=seed, source=instance.source, quadratic=quadratic)


def build_robot_instance(instance: InstanceSpec) -> RobotInstance:
    spec = instance.robot
    if spec.reference == "heart":
        return RobotInstance.heart(
            N=instance.N, dt=spec.dt, sim_dt=spec.sim_dt,
            control_scale=spec.control_scale, time_scale=spec.time_scale,
        )
    return RobotInstance.line(
        N=instance.N, dt=spec.dt, sim_dt=spec.sim_dt, speed=spec.speed,
        heading=spec.heading, control_scale=spec.control_scale,
    )


def build_for_config(config: ExperimentConfig, seed: int) -> BuiltInstance:
    try:
        return build_control_instance(config.instance, seed)
    except ConfigError as e:
        raise ConfigError(config.path, e.field, str(e)) from e
