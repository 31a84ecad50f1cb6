import math

import numpy as np
import pytest

from rhgc.core.errors import InvalidConditionNumber, NegativeRegretBeyondTolerance
from rhgc.services.control.algorithms import (
    acceleration_threshold,
    bound_factor,
    compute_stepsizes,
    dynamic_regret,
    foss_run,
    optimal_steady_state,
    rhag_run,
    rhgd_bound_factor,
    rhgd_run,
    rhtm_bound_factor,
    rhtm_run,
    nesterov_rule,
    run_receding_horizon,
)
from rhgc.services.control.baselines import offline_optimal
from rhgc.services.control.costs import PseudoHuberCost, QuadraticCost
from rhgc.services.control.engine import MomentumRule, batch_momentum
from rhgc.services.control.lqt import steady_state
from tests.conftest import make_quadratic_zcost


def test_stepsizes_follow_the_condition_number():
    stepsizes = compute_stepsizes(l_c=4.0, zeta=16.0)
    assert stepsizes.phi == pytest.approx(0.75)
    assert stepsizes.gamma_g == pytest.approx(0.25)
    assert stepsizes.gamma_c == pytest.approx(1.75 / 4.0)
    assert stepsizes.gamma_omega == pytest.approx(0.75 ** 2 / 1.25)
    assert stepsizes.gamma_y == pytest.approx(0.75 ** 2 / (1.75 * 1.25))
    assert stepsizes.gamma_z == pytest.approx(0.75 ** 2 / (1 - 0.75 ** 2))
    with pytest.raises(InvalidConditionNumber):
        compute_stepsizes(l_c=1.0, zeta=0.5)


def test_bound_factors():
    assert rhgd_bound_factor(4.0, 0) == pytest.approx(4.0)
    assert rhtm_bound_factor(4.0, 0) == pytest.approx(16.0)
    assert rhgd_bound_factor(4.0, 2) == pytest.approx(4.0 * 0.75 ** 2)
    assert rhtm_bound_factor(4.0, 1) == pytest.approx(16.0 * 0.25)
    assert bound_factor("foss", 4.0, 3) == 1.0
    assert math.isnan(bound_factor("rhag", 4.0, 3))
    assert math.isnan(bound_factor("submpc-1", 4.0, 3))


def test_nesterov_rule_has_no_z_momentum():
    rule = nesterov_rule(l_c=9.0, zeta=9.0)
    assert rule.step == pytest.approx(1.0 / 9.0)
    assert rule.omega == pytest.approx(0.5)
    assert rule.y == pytest.approx(0.5)
    assert rule.z == 0.0


def test_momentum_rule_without_momentum_is_gradient_step():
    rule = MomentumRule.gradient_descent(0.1)
    omega, y, z = rule.update(np.array([1.0]), np.array([5.0]), np.array([2.0]))
    np.testing.assert_allclose([omega, y, z], [[0.8], [0.8], [0.8]])


def test_quadratic_steady_state_matches_closed_form(sweep_canonical):
    Q = np.diag([1.3, 1.7])
    R = np.array([[1.2]])
    theta = np.array([4.0, -3.0])
    z = optimal_steady_state(QuadraticCost(Q, theta), QuadraticCost(R), sweep_canonical)
    np.testing.assert_allclose(z, steady_state(Q, R, theta, sweep_canonical).z_e)


def test_general_steady_state_by_gradient_descent(sweep_canonical):
    f = PseudoHuberCost(np.array([4.0, -3.0]), curvature=1.0)
    g = QuadraticCost(np.eye(1))
    z = optimal_steady_state(f, g, sweep_canonical)
    F_1 = sweep_canonical.replication
    G = np.eye(1) - sweep_canonical.A_I @ F_1
    grad = F_1.T @ f.gradient(F_1 @ z) + G.T @ g.gradient(G @ z)
    assert np.linalg.norm(grad) <= 1e-8


def test_window_below_p_plus_one_is_foss(sweep_zcost):
    foss = foss_run(sweep_zcost)
    assert foss.gradient_evaluations == 0
    for W in range(1, sweep_zcost.p + 1):
        for run_fn in (rhgd_run, rhag_run, rhtm_run):
            run = run_fn(sweep_zcost, W)
            assert run.K == 0
            assert run.cost == pytest.approx(foss.cost, rel=1e-12)


def test_cost_depends_on_window_only_through_K(sweep_zcost):
    p = sweep_zcost.p
    for run_fn in (rhgd_run, rhag_run, rhtm_run):
        for K in (1, 2, 3):
            costs = [run_fn(sweep_zcost, W).cost for W in range(K * p + 1, (K + 1) * p + 1)]
            assert max(costs) - min(costs) <= 1e-9 * max(1.0, abs(costs[0]))


@pytest.mark.parametrize("run_fn, rule_name", [(rhgd_run, "gradient_rule"), (rhtm_run, "triple_momentum_rule")])
def test_online_iterates_equal_batch_iterations(quadratic_zcost, run_fn, rule_name):
    zcost = quadratic_zcost
    rule = getattr(compute_stepsizes(zcost.l_c, zcost.zeta), rule_name)
    for K in (1, 2, 4):
        W = K * zcost.p + 1
        run = run_fn(zcost, W)
        batch = batch_momentum(zcost.gradient, run.z_initial.z, rule, K)
        np.testing.assert_allclose(run.z_final.z, batch, rtol=1e-10, atol=1e-10)


def test_rhag_online_iterates_equal_batch_nesterov(quadratic_zcost):
    zcost = quadratic_zcost
    rule = nesterov_rule(zcost.l_c, zcost.zeta)
    W = 3 * zcost.p + 1
    run = rhag_run(zcost, W)
    batch = batch_momentum(zcost.gradient, run.z_initial.z, rule, 3)
    np.testing.assert_allclose(run.z_final.z, batch, rtol=1e-10, atol=1e-10)


def test_realized_trajectory_follows_final_iterates(quadratic_zcost):
    run = rhtm_run(quadratic_zcost, 5)
    assert run.cost == pytest.approx(quadratic_zcost.value(run.z_final.z), rel=1e-12)


@pytest.mark.parametrize("seed, n, m", [(11, 2, 1), (12, 3, 1), (13, 4, 2)])
def test_regret_bounds_hold(seed, n, m):
    zcost, _ = make_quadratic_zcost(seed, n=n, m=m, N=20)
    J_star = offline_optimal(zcost).J_star
    foss = dynamic_regret(foss_run(zcost), J_star, zcost.zeta)
    assert foss.regret >= 0
    for W in (1, 2, 3, 5, 8):
        K = (W - 1) // zcost.p
        tolerance = 1e-9 + 1e-10 * abs(J_star)
        rhgd = dynamic_regret(rhgd_run(zcost, W), J_star, zcost.zeta)
        rhtm = dynamic_regret(rhtm_run(zcost, W), J_star, zcost.zeta)
        assert rhgd.regret <= rhgd_bound_factor(zcost.zeta, K) * foss.regret + tolerance
        assert rhtm.regret <= rhtm_bound_factor(zcost.zeta, K) * foss.regret + tolerance
        assert rhgd.bound_factor == pytest.approx(rhgd_bound_factor(zcost.zeta, K))


def test_runs_respect_the_lookahead(quadratic_zcost):
    for run_fn in (foss_run, lambda z: rhtm_run(z, 7), lambda z: rhag_run(z, 4)):
        assert run_fn(quadratic_zcost).lookahead_excess <= 0


def test_gradient_evaluations_are_counted(sweep_zcost):
    p = sweep_zcost.p
    for W in (3, 5, 7):
        K = (W - 1) // p
        run = rhgd_run(sweep_zcost, W)
        assert run.gradient_evaluations == sweep_zcost.N * K * (2 * p + 1)


def test_regret_below_optimum_is_rejected(sweep_zcost):
    run = foss_run(sweep_zcost)
    with pytest.raises(NegativeRegretBeyondTolerance):
        dynamic_regret(run, run.cost + 1.0 + abs(run.cost), sweep_zcost.zeta)
    report = dynamic_regret(run, run.cost, sweep_zcost.zeta)
    assert report.regret == 0.0
    assert report.algorithm == "foss"
    assert report.oracle == "foss"


def test_nesterov_without_momentum_is_rhgd(sweep_zcost):
    rule = nesterov_rule(sweep_zcost.l_c, 1.0)
    assert rule == MomentumRule.gradient_descent(1.0 / sweep_zcost.l_c)
    for W in (3, 7):
        rhag = run_receding_horizon(sweep_zcost, W, rule, "rhag")
        rhgd = rhgd_run(sweep_zcost, W)
        np.testing.assert_allclose(rhag.z_final.z, rhgd.z_final.z, rtol=0, atol=0)
        assert rhag.cost == rhgd.cost


def test_acceleration_threshold():
    assert acceleration_threshold(1.0) == 0
    assert acceleration_threshold(4.0) == 2
    assert acceleration_threshold(14.0) == 5
    K = acceleration_threshold(30.0)
    assert rhtm_bound_factor(30.0, K) <= rhgd_bound_factor(30.0, K)
    assert rhtm_bound_factor(30.0, K - 1) > rhgd_bound_factor(30.0, K - 1)
    with pytest.raises(InvalidConditionNumber):
        acceleration_threshold(0.5)
