import math

import numpy as np
import pytest

from rhgc.services.robot.kinematics import (
    Pose,
    controls_of_positions,
    controls_to_reach,
    heading_of,
    path_controls,
    robot_step,
    wrap_angle,
)


@pytest.mark.parametrize("angle, expected", [
    (0.5, 0.5),
    (math.pi, math.pi),
    (-math.pi, math.pi),
    (2 * math.pi + 0.25, 0.25),
    (-2 * math.pi - 0.25, -0.25),
])
def test_wrap_angle(angle, expected):
    assert wrap_angle(angle) == pytest.approx(expected)


def test_straight_step():
    pose = robot_step(Pose(1.0, 2.0, 0.0), v=2.0, w=0.0, dt=0.025, sim_dt=0.001)
    assert pose.x == pytest.approx(1.05)
    assert pose.y == pytest.approx(2.0)
    assert pose.heading == 0.0


def test_turning_in_place():
    pose = robot_step(Pose(0.0, 0.0, 0.0), v=0.0, w=4.0, dt=0.025, sim_dt=0.001)
    assert pose.position == pytest.approx(np.zeros(2))
    assert pose.heading == pytest.approx(0.1)


def test_step_requires_integer_substeps():
    with pytest.raises(ValueError):
        robot_step(Pose(), 1.0, 0.0, dt=0.0025, sim_dt=0.001)


def test_controls_from_three_positions():
    heading, v, w = controls_of_positions(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]), dt=0.5)
    assert heading == pytest.approx(0.0)
    assert v == pytest.approx(2.0)
    assert w == pytest.approx(math.pi)


def test_zero_length_segment_keeps_heading():
    assert heading_of(np.zeros(2), 0.7) == 0.7
    heading, v, _ = controls_of_positions(np.array([[1.0, 1.0], [1.0, 1.0], [1.0, 2.0]]), dt=1.0,
                                          previous_heading=0.3)
    assert heading == 0.3
    assert v == 0.0


def test_path_controls_lengths_and_wrap():
    # heading crosses from just below pi to just above -pi
    positions = np.array([[0.0, 0.0], [-1.0, 0.01], [-2.0, 0.0], [-3.0, -0.01]])
    headings, speeds, rates = path_controls(positions, dt=1.0)
    assert len(headings) == 3 and len(speeds) == 3 and len(rates) == 2
    assert np.all(np.abs(rates) < 0.1)


@pytest.mark.parametrize("pose, target", [
    (Pose(0.0, 0.0, 0.0), (0.05, 0.0)),
    (Pose(0.0, 0.0, 0.3), (0.04, 0.02)),
    (Pose(1.0, -1.0, 2.5), (0.97, -0.98)),
    (Pose(0.0, 0.0, 0.0), (-0.03, 0.01)),
])
def test_arc_controls_land_on_the_target(pose, target):
    v, w = controls_to_reach(pose, np.array(target), dt=0.025)
    reached = robot_step(pose, v, w, dt=0.025, sim_dt=0.001)
    np.testing.assert_allclose(reached.position, target, atol=1e-3)


def test_arc_controls_geometry():
    v, w = controls_to_reach(Pose(0.0, 0.0, 0.0), np.array([2.0, 0.0]), dt=0.5)
    assert v == pytest.approx(4.0)
    assert w == 0.0
    # quarter-circle bearing: arc turns by twice the bearing
    v, w = controls_to_reach(Pose(0.0, 0.0, 0.0), np.array([1.0, 1.0]), dt=1.0)
    assert w == pytest.approx(math.pi / 2)
    assert v == pytest.approx(math.sqrt(2.0) * (math.pi / 4) / math.sin(math.pi / 4))
    # behind the robot it backs up
    v, _ = controls_to_reach(Pose(0.0, 0.0, 0.0), np.array([-1.0, 0.0]), dt=1.0)
    assert v == pytest.approx(-1.0)
    assert controls_to_reach(Pose(1.0, 1.0, 0.4), np.array([1.0, 1.0]), dt=1.0) == (0.0, 0.0)
