"""Two-wheel robot kinematics and the inverse map from positions to (heading, speed, turn rate)."""
from dataclasses import dataclass
from typing import Tuple
import logging
import math

import numpy as np

# Configure logging
logger = logging.getLogger(__name__)

# Segments shorter than this carry the previous heading
MIN_DISPLACEMENT = 1e-12


@dataclass
class Pose:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


def wrap_angle(angle: float) -> float:
    """Map an angle to (-pi, pi]."""
    return angle - 2.0 * math.pi * math.ceil((angle - math.pi) / (2.0 * math.pi))


def robot_step(pose: Pose, v: float, w: float, dt: float, sim_dt: float) -> Pose:
    """
    Integrate x' = v cos(heading), y' = v sin(heading), heading' = w over one control interval.

    Args:
        pose: Current pose
        v: Tangential speed
        w: Angular rate
        dt: Control interval, a positive multiple of sim_dt
        sim_dt: Simulation step

    Returns:
        Pose after dt
    """
    substeps = round(dt / sim_dt)
    if substeps < 1 or abs(substeps * sim_dt - dt) > 1e-9 * dt:
        raise ValueError(f"dt={dt} is not a positive multiple of sim_dt={sim_dt}")
    x, y, heading = pose.x, pose.y, pose.heading
    for _ in range(substeps):
        x += sim_dt * math.cos(heading) * v
        y += sim_dt * math.sin(heading) * v
        heading += sim_dt * w
    return Pose(x, y, heading)


def heading_of(displacement: np.ndarray, previous: float) -> float:
    if np.hypot(displacement[0], displacement[1]) <= MIN_DISPLACEMENT:
        return previous
    return math.atan2(displacement[1], displacement[0])


def controls_of_positions(window: np.ndarray, dt: float, previous_heading: float = 0.0) -> Tuple[float, float, float]:
    """
    Heading, speed and turn rate at t from positions t, t+1, t+2.

    Args:
        window: (3, 2) array of consecutive positions
        dt: Control interval
        previous_heading: Heading used when the first segment has zero length

    Returns:
        (heading_t, v_t, w_t)
    """
    window = np.asarray(window, dtype=float)
    d_t = window[1] - window[0]
    d_next = window[2] - window[1]
    heading = heading_of(d_t, previous_heading)
    heading_next = heading_of(d_next, heading)
    v = float(np.hypot(d_t[0], d_t[1])) / dt
    w = wrap_angle(heading_next - heading) / dt
    return heading, v, w


def path_controls(positions: np.ndarray, dt: float, initial_heading: float = 0.0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Headings and speeds for t = 0..N-1 and turn rates for t = 0..N-2 of a path of N+1 positions.
    """
    positions = np.asarray(positions, dtype=float)
    segments = np.diff(positions, axis=0)
    headings = np.empty(len(segments))
    previous = initial_heading
    for t, d in enumerate(segments):
        previous = heading_of(d, previous)
        headings[t] = previous
    speeds = np.hypot(segments[:, 0], segments[:, 1]) / dt
    rates = np.array([wrap_angle(b - a) for a, b in zip(headings[:-1], headings[1:])]) / dt
    return headings, speeds, rates


def controls_to_reach(pose: Pose, target: np.ndarray, dt: float) -> Tuple[float, float]:
    """
    Constant (v, w) whose circular arc leaves the pose tangent to its heading and ends at target.

    With L the distance to the target and alpha its bearing relative to the heading, the arc has
    curvature 2 sin(alpha) / L, turns by 2 alpha and has length L alpha / sin(alpha). Targets
    behind the robot are reached in reverse.

    Args:
        pose: Current pose
        target: Position to reach after dt
        dt: Control interval

    Returns:
        (v, w)
    """
    offset = np.asarray(target, dtype=float) - pose.position
    distance = float(np.hypot(offset[0], offset[1]))
    if distance <= MIN_DISPLACEMENT:
        return 0.0, 0.0
    alpha = wrap_angle(math.atan2(offset[1], offset[0]) - pose.heading)
    direction = 1.0
    if abs(alpha) > math.pi / 2:
        alpha = wrap_angle(alpha - math.pi)
        direction = -1.0
    arc = distance if abs(alpha) < 1e-9 else distance * alpha / math.sin(alpha)
    return direction * arc / dt, 2.0 * alpha / dt
