"""
Path tracking for a two-wheel robot with receding-horizon gradient control.

The kinematics are written in terms of positions only: headings, speeds and turn rates follow
from consecutive positions, so the tracking problem becomes an unconstrained problem over the
positions (x_t, y_t), t = 1..N. The stage terms touching position t span positions t-2..t+2,
which plays the role of a coupling width p = 2 in the receding-horizon engine.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple
import logging
import math

import numpy as np
import pandas as pd

from rhgc.core.errors import NonFiniteIterate, NonPositiveConstant, WindowTooShort
from rhgc.services.control.algorithms import compute_stepsizes, nesterov_rule
from rhgc.services.control.engine import MomentumRule, RecedingHorizonEngine
from rhgc.services.robot.kinematics import (
    MIN_DISPLACEMENT,
    Pose,
    controls_to_reach,
    heading_of,
    path_controls,
    robot_step,
    wrap_angle,
)

# Configure logging
logger = logging.getLogger(__name__)

# Positions t-2..t+2 interact with position t
COUPLING = 2
ROBOT_ALGORITHMS = ("rhgd", "rhag", "rhtm")
ROBOT_ORACLES = ("reference", "hold")
PATH_COLUMNS = ["t", "x", "y", "x_ref", "y_ref", "v", "w"]


def heart_reference(N: int, time_scale: float, dt: float) -> np.ndarray:
    """
    Heart-shaped reference sampled at s_t = time_scale * t * dt for t = 0..N.

        x(s) = 16 sin^3(s - 6)
        y(s) = 13 cos(s) - 5 cos(2s - 12) - 2 cos(3s - 18) - cos(4s - 24)
    """
    s = time_scale * dt * np.arange(N + 1)
    x = 16.0 * np.sin(s - 6.0) ** 3
    y = 13.0 * np.cos(s) - 5.0 * np.cos(2 * s - 12.0) - 2.0 * np.cos(3 * s - 18.0) - np.cos(4 * s - 24.0)
    return np.column_stack([x, y])


def line_reference(N: int, dt: float, speed: float, heading: float = 0.0,
                   start: Tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Straight line traversed at constant speed."""
    direction = np.array([math.cos(heading), math.sin(heading)])
    return np.asarray(start, dtype=float) + speed * dt * np.arange(N + 1)[:, None] * direction


@dataclass
class RobotInstance:
    """
    Tracking problem: reference positions and the weights of

        sum_t c_t ||p_t - r_t||^2 + sum_t c^v_t v_t^2 + sum_t c^w_t w_t^2

    Speeds exist for t = 0..N-1 and turn rates for t = 0..N-2.
    """
    reference: np.ndarray
    dt: float = 0.025
    sim_dt: float = 0.001
    tracking: Optional[np.ndarray] = None
    speed: Optional[np.ndarray] = None
    turn: Optional[np.ndarray] = None
    # s_t = time_scale * t * dt in the reference formulas, 0 when not applicable
    time_scale: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        self.reference = np.asarray(self.reference, dtype=float)
        if self.reference.ndim != 2 or self.reference.shape[1] != 2 or len(self.reference) < 2:
            raise ValueError(f"Reference must be an (N+1, 2) array, got shape {self.reference.shape}")
        N = self.N
        if self.tracking is None:
            self.tracking = np.ones(N + 1)
            self.tracking[0] = 0.0
        if self.speed is None:
            self.speed = self.control_weights(N, self.dt, 15.0)
        if self.turn is None:
            self.turn = self.control_weights(N, self.dt, 15.0)
        for label in ("tracking", "speed", "turn"):
            values = np.asarray(getattr(self, label), dtype=float)
            if values.shape != (N + 1,):
                raise ValueError(f"{label} weights must have length {N + 1}, got {values.shape}")
            if np.any(values < 0):
                raise ValueError(f"{label} weights must be nonnegative")
            setattr(self, label, values)

    @staticmethod
    def control_weights(N: int, dt: float, scale: float) -> np.ndarray:
        weights = np.full(N + 1, scale * dt ** 2)
        weights[N] = 0.0
        return weights

    @classmethod
    def heart(cls, N: int = 400, dt: float = 0.025, sim_dt: float = 0.001,
              control_scale: float = 15.0, time_scale: Optional[float] = None) -> "RobotInstance":
        """Heart reference traversed once over the horizon unless time_scale says otherwise."""
        time_scale = 2.0 * math.pi / (N * dt) if time_scale is None else time_scale
        return cls(
            reference=heart_reference(N, time_scale, dt),
            dt=dt,
            sim_dt=sim_dt,
            speed=cls.control_weights(N, dt, control_scale),
            turn=cls.control_weights(N, dt, control_scale),
            time_scale=time_scale,
            name="heart",
        )

    @classmethod
    def line(cls, N: int = 200, dt: float = 0.025, sim_dt: float = 0.001, speed: float = 1.0,
             heading: float = 0.0, control_scale: float = 15.0) -> "RobotInstance":
        return cls(
            reference=line_reference(N, dt, speed, heading),
            dt=dt,
            sim_dt=sim_dt,
            speed=cls.control_weights(N, dt, control_scale),
            turn=cls.control_weights(N, dt, control_scale),
            name="line",
        )

    @property
    def N(self) -> int:
        return len(self.reference) - 1

    @property
    def start(self) -> np.ndarray:
        return self.reference[0].copy()

    @property
    def initial_heading(self) -> float:
        return heading_of(self.reference[1] - self.reference[0], 0.0)

    @property
    def initial_speed(self) -> float:
        """The robot starts moving along the reference's first segment at its speed."""
        return float(np.linalg.norm(self.reference[1] - self.reference[0])) / self.dt

    def first_position(self) -> np.ndarray:
        """Position after one interval at the initial speed and heading."""
        step = self.initial_speed * self.dt
        return self.start + step * np.array([math.cos(self.initial_heading), math.sin(self.initial_heading)])

    def coefficients(self, stages: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        Weights and reference positions for consecutive stages, zero outside the horizon.

        Returns:
            (tracking, speed, turn, reference); speed is zero past N-1 and turn past N-2
        """
        stages = np.asarray(stages)
        N = self.N
        inside = (stages >= 0) & (stages <= N)
        clipped = np.clip(stages, 0, N)
        tracking = np.where(inside, self.tracking[clipped], 0.0)
        speed = np.where((stages >= 0) & (stages <= N - 1), self.speed[clipped], 0.0)
        turn = np.where((stages >= 0) & (stages <= N - 2), self.turn[clipped], 0.0)
        reference = self.reference[clipped]
        return tracking, speed, turn, reference


def _headings(segments: np.ndarray, initial: float, fixed: Optional[np.ndarray] = None) -> np.ndarray:
    # fixed entries that are not NaN override the computed heading
    headings = np.empty(len(segments))
    previous = initial
    for k, d in enumerate(segments):
        if fixed is not None and not np.isnan(fixed[k]):
            previous = float(fixed[k])
        else:
            previous = heading_of(d, previous)
        headings[k] = previous
    return headings


def _segment_value_and_gradient(
    positions: np.ndarray, stages: np.ndarray, instance: RobotInstance, initial_heading: float,
    with_gradient: bool = True, fixed_headings: Optional[np.ndarray] = None,
) -> Tuple[float, Optional[np.ndarray]]:
    """Objective restricted to the terms whose positions all lie in `positions`, and its gradient."""
    tracking, speed, turn, reference = instance.coefficients(stages)
    dt = instance.dt
    error = positions - reference
    segments = np.diff(positions, axis=0)
    headings = _headings(segments, initial_heading, fixed_headings)
    rates = np.array([wrap_angle(b - a) for a, b in zip(headings[:-1], headings[1:])]) / dt

    speed_w, turn_w = speed[:-1], turn[:len(rates)]
    value = float(
        np.sum(tracking * np.sum(error ** 2, axis=1))
        + np.sum(speed_w * np.sum(segments ** 2, axis=1)) / dt ** 2
        + np.sum(turn_w * rates ** 2)
    )
    if not with_gradient:
        return value, None

    grad = 2.0 * tracking[:, None] * error
    speed_term = 2.0 * speed_w[:, None] * segments / dt ** 2
    grad[1:] += speed_term
    grad[:-1] -= speed_term

    # d(heading_k)/d(segment_k) = (-dy, dx) / |d|^2
    lengths = np.sum(segments ** 2, axis=1)
    jac = np.zeros_like(segments)
    moving = np.sqrt(lengths) > MIN_DISPLACEMENT
    if fixed_headings is not None:
        moving &= np.isnan(fixed_headings)
    jac[moving, 0] = -segments[moving, 1] / lengths[moving]
    jac[moving, 1] = segments[moving, 0] / lengths[moving]
    heading_grad = np.zeros(len(segments))
    pull = 2.0 * turn_w * rates / dt
    heading_grad[1:len(rates) + 1] += pull
    heading_grad[:len(rates)] -= pull
    grad[1:] += heading_grad[:, None] * jac
    grad[:-1] -= heading_grad[:, None] * jac
    return value, grad


@dataclass
class RobotPath:
    """Positions t = 0..N with the heading, speed and turn rate they imply."""
    positions: np.ndarray
    dt: float
    initial_heading: float = 0.0

    @property
    def N(self) -> int:
        return len(self.positions) - 1

    def controls(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return path_controls(self.positions, self.dt, self.initial_heading)

    @property
    def headings(self) -> np.ndarray:
        return self.controls()[0]

    @property
    def speeds(self) -> np.ndarray:
        return self.controls()[1]

    @property
    def rates(self) -> np.ndarray:
        return self.controls()[2]

    def frame(self, instance: RobotInstance, speeds: Optional[np.ndarray] = None,
              rates: Optional[np.ndarray] = None) -> pd.DataFrame:
        """
        Table with columns t, x, y, x_ref, y_ref, v, w; controls past their last stage are 0.
        """
        _, derived_speeds, derived_rates = self.controls()
        speeds = derived_speeds if speeds is None else speeds
        rates = derived_rates if rates is None else rates
        v = np.zeros(self.N + 1)
        w = np.zeros(self.N + 1)
        v[:len(speeds)] = speeds
        w[:len(rates)] = rates
        return pd.DataFrame({
            "t": np.arange(self.N + 1),
            "x": self.positions[:, 0],
            "y": self.positions[:, 1],
            "x_ref": instance.reference[:, 0],
            "y_ref": instance.reference[:, 1],
            "v": v,
            "w": w,
        }, columns=PATH_COLUMNS)


def robot_total_cost(path: RobotPath, instance: RobotInstance) -> float:
    """Tracking objective of a full path."""
    if path.N != instance.N:
        raise ValueError(f"Path has {path.N + 1} positions, instance expects {instance.N + 1}")
    value, _ = _segment_value_and_gradient(
        path.positions, np.arange(instance.N + 1), instance, path.initial_heading, with_gradient=False,
    )
    return value


class RobotCost:
    """The tracking objective as a function of the free positions z_t = p_t, t = 1..N."""

    def __init__(self, instance: RobotInstance):
        self.instance = instance
        self.N = instance.N
        self.start = instance.start
        self.initial_heading = instance.initial_heading
        self._stages = np.arange(self.N + 1)

    def path(self, z: np.ndarray) -> np.ndarray:
        return np.vstack([self.start[None, :], np.asarray(z, dtype=float).reshape(self.N, 2)])

    def value(self, z: np.ndarray) -> float:
        value, _ = _segment_value_and_gradient(
            self.path(z), self._stages, self.instance, self.initial_heading, with_gradient=False,
        )
        return value

    def gradient(self, z: np.ndarray) -> np.ndarray:
        _, grad = _segment_value_and_gradient(self.path(z), self._stages, self.instance, self.initial_heading)
        return grad[1:]

    def local_gradient(self, stage: int, window: np.ndarray) -> np.ndarray:
        """
        Partial gradient at one stage from positions stage-2..stage+2.

        Rows outside 0..N are ignored through zero weights.
        """
        stages = np.arange(stage - COUPLING, stage + COUPLING + 1)
        _, grad = _segment_value_and_gradient(
            np.asarray(window, dtype=float), stages, self.instance, self.initial_heading,
        )
        return grad[COUPLING]

    def local_gradient_fd(self, stage: int, window: np.ndarray, step: float = 1e-6) -> np.ndarray:
        """
        Central finite-difference version of local_gradient.

        Segments of zero length in the unperturbed window keep their carried heading under the
        perturbation, matching the zero heading derivative the analytic gradient assigns them.
        """
        stages = np.arange(stage - COUPLING, stage + COUPLING + 1)
        window = np.asarray(window, dtype=float)
        segments = np.diff(window, axis=0)
        carried = _headings(segments, self.initial_heading)
        degenerate = np.hypot(segments[:, 0], segments[:, 1]) <= MIN_DISPLACEMENT
        fixed = np.where(degenerate, carried, np.nan)
        grad = np.zeros(2)
        for axis in range(2):
            shifted = window.copy()
            shifted[COUPLING, axis] += step
            plus, _ = _segment_value_and_gradient(
                shifted, stages, self.instance, self.initial_heading, with_gradient=False, fixed_headings=fixed,
            )
            shifted[COUPLING, axis] -= 2 * step
            minus, _ = _segment_value_and_gradient(
                shifted, stages, self.instance, self.initial_heading, with_gradient=False, fixed_headings=fixed,
            )
            grad[axis] = (plus - minus) / (2 * step)
        return grad


def initial_plan(instance: RobotInstance, oracle: str = "reference") -> np.ndarray:
    """z(0) for t = 1..N as produced by an initialization oracle without refinement."""
    if oracle == "reference":
        plan = instance.reference[:-1].copy()
    elif oracle == "hold":
        plan = np.tile(instance.first_position(), (instance.N, 1))
    else:
        raise ValueError(f"Unknown robot oracle '{oracle}', expected one of {ROBOT_ORACLES}")
    # stage 1 continues the initial motion under either oracle
    plan[0] = instance.first_position()
    return plan


def estimate_smoothness(cost: RobotCost, z: np.ndarray, iterations: int = 50,
                        safety: float = 2.0, seed: int = 0) -> float:
    """
    Empirical Lipschitz constant of the gradient near z: power iteration on finite-difference
    Hessian-vector products, scaled by a safety factor.
    """
    z = np.asarray(z, dtype=float)
    eps = 1e-6 * max(1.0, float(np.max(np.abs(z))))
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(z.shape)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iterations):
        hv = (cost.gradient(z + eps * v) - cost.gradient(z - eps * v)) / (2 * eps)
        estimate = abs(float(np.sum(v * hv)))
        norm = float(np.linalg.norm(hv))
        if norm == 0.0 or not np.isfinite(norm):
            break
        v = hv / norm
    # the tracking terms alone have curvature 2 max c_t
    floor = 2.0 * float(np.max(cost.instance.tracking))
    return safety * max(estimate, floor)


def strong_convexity_estimate(instance: RobotInstance) -> float:
    """Curvature of the tracking terms, 2 min_{t>=1} c_t."""
    return 2.0 * float(np.min(instance.tracking[1:]))


def robot_rule(algorithm: str, smoothness: float, mu: float) -> MomentumRule:
    if algorithm not in ROBOT_ALGORITHMS:
        raise ValueError(f"Unknown robot algorithm '{algorithm}', expected one of {ROBOT_ALGORITHMS}")
    if algorithm != "rhgd" and not mu > 0:
        raise NonPositiveConstant("mu_hat", mu)
    zeta = max(smoothness / mu, 1.0) if mu > 0 else float("inf")
    if algorithm == "rhgd":
        return MomentumRule.gradient_descent(1.0 / smoothness)
    if algorithm == "rhag":
        return nesterov_rule(smoothness, zeta)
    return compute_stepsizes(smoothness, zeta).triple_momentum_rule


@dataclass
class RobotRun:
    """Executed and planned paths of one robot run."""
    algorithm: str
    W: int
    K: int
    oracle: str
    executed: RobotPath
    planned: RobotPath
    speeds: np.ndarray
    rates: np.ndarray
    cost: float
    planned_cost: float
    smoothness: float
    gradient_evaluations: int
    # Largest (stage read - stage revealed), <= 0 when gating held
    lookahead_excess: int = field(default=-(10 ** 9))

    def frames(self, instance: RobotInstance) -> Tuple[pd.DataFrame, pd.DataFrame]:
        """(executed, planned) path tables."""
        return self.executed.frame(instance, self.speeds, self.rates), self.planned.frame(instance)


def robot_rhgc(
    instance: RobotInstance,
    W: int,
    algorithm: str = "rhtm",
    oracle: str = "reference",
    finite_difference: bool = False,
) -> RobotRun:
    """
    Receding-horizon gradient control of the robot.

    At t = 1-W..N-1 the references up to stage t+W-1 are known, stage t+W is initialized by the
    oracle and stages t+W-2j are refined at iteration j. Stage 1 always starts from the initial
    motion. From t = 0 on, (v_t, w_t) is the arc from the current pose to the committed position
    p_{t+1}, the kinematics are integrated at sim_dt, and the observed position replaces the plan
    for stage t+1.

    Args:
        instance: Tracking problem
        W: Lookahead window, clamped to N
        algorithm: "rhgd", "rhag" or "rhtm"
        oracle: "reference" (reference at t+W-1) or "hold" (planned position at t+W-1)
        finite_difference: Use central differences instead of the analytic partial gradient

    Returns:
        RobotRun

    Raises:
        WindowTooShort: if W < 3
        NonFiniteIterate: if an iterate diverges
    """
    N, dt = instance.N, instance.dt
    if W > N:
        logger.warning(f"Lookahead window {W} exceeds horizon {N}; clamping to {N}")
        W = N
    if W < COUPLING + 1:
        raise WindowTooShort(COUPLING + 1, W)
    if oracle not in ROBOT_ORACLES:
        raise ValueError(f"Unknown robot oracle '{oracle}', expected one of {ROBOT_ORACLES}")

    cost = RobotCost(instance)
    smoothness = estimate_smoothness(cost, initial_plan(instance, oracle))
    mu = strong_convexity_estimate(instance)
    rule = robot_rule(algorithm, smoothness, mu)
    logger.info(f"Robot {algorithm}: N={N}, W={W}, L_hat={smoothness:.4g}, mu_hat={mu:.4g}")

    revealed = {"limit": -1, "excess": -(10 ** 9)}
    gradient_fn: Callable[[int, np.ndarray], np.ndarray] = (
        cost.local_gradient_fd if finite_difference else cost.local_gradient
    )

    def local_gradient(stage: int, window: np.ndarray) -> np.ndarray:
        # the partial gradient at a stage depends on the reference at that stage only
        revealed["excess"] = max(revealed["excess"], stage - revealed["limit"])
        return gradient_fn(stage, window)

    engine = RecedingHorizonEngine(
        N=N, p=COUPLING, m=2, W=W, rule=rule,
        local_gradient=local_gradient,
        history=np.tile(instance.start, (COUPLING, 1)),
        evaluations_per_gradient=3,
    )

    pose = Pose(instance.start[0], instance.start[1], instance.initial_heading)
    executed = [pose.position]
    planned = [instance.start.copy()]
    speeds, rates = [], []
    for t in range(1 - W, N):
        revealed["limit"] = t + W - 1
        stage = t + W
        if stage == 1:
            engine.initialize(stage, instance.first_position())
        elif stage <= N:
            if oracle == "reference":
                engine.initialize(stage, instance.reference[stage - 1])
            else:
                engine.initialize(stage, engine.latest(stage - 1))
        engine.sweep(t)
        if t < 0:
            continue

        target = engine.committed(t + 1)
        if not np.all(np.isfinite(target)):
            raise NonFiniteIterate(t + 1, engine.K)
        v, w = controls_to_reach(pose, target, dt)
        pose = robot_step(pose, v, w, dt, instance.sim_dt)

        planned.append(target)
        executed.append(pose.position)
        speeds.append(v)
        rates.append(w)
        engine.overwrite(t + 1, pose.position)

    executed_path = RobotPath(np.array(executed), dt, instance.initial_heading)
    planned_path = RobotPath(np.array(planned), dt, instance.initial_heading)
    run = RobotRun(
        algorithm=algorithm,
        W=W,
        K=engine.K,
        oracle=oracle,
        executed=executed_path,
        planned=planned_path,
        speeds=np.array(speeds),
        rates=np.array(rates),
        cost=robot_total_cost(executed_path, instance),
        planned_cost=robot_total_cost(planned_path, instance),
        smoothness=smoothness,
        gradient_evaluations=engine.gradient_evaluations,
        lookahead_excess=revealed["excess"],
    )
    logger.info(f"Robot {algorithm} run finished: W={W}, K={engine.K}, cost={run.cost:.6g}")
    return run
