import numpy as np
import pytest

from rhgc.services.control.algorithms import dynamic_regret
from rhgc.services.control.baselines import (
    TruncatedProblem,
    input_to_state_norm,
    offline_optimal,
    submpc_momentum,
    submpc_run,
)
from rhgc.services.control.costs import CostSequence, PseudoHuberCost, QuadraticCost, WindowedCostProvider
from rhgc.services.control.reformulate import ZCost


def _pseudo_huber_zcost(canonical, N=10, seed=0):
    rng = np.random.default_rng(seed)
    costs = CostSequence(
        [PseudoHuberCost(rng.uniform(-5, 5, size=canonical.n)) for _ in range(N + 1)],
        [QuadraticCost(np.eye(canonical.m)) for _ in range(N)],
    )
    return ZCost(canonical, costs)


def test_offline_methods_agree(quadratic_zcost):
    dp = offline_optimal(quadratic_zcost)
    assert dp.method == "dp"
    assert dp.cross_check is not None and dp.cross_check <= 1e-8
    linear = offline_optimal(quadratic_zcost, method="linear_solve")
    batch = offline_optimal(quadratic_zcost, method="batch_tm")
    assert linear.J_star == pytest.approx(dp.J_star, rel=1e-9)
    assert batch.J_star == pytest.approx(dp.J_star, rel=1e-8)
    np.testing.assert_allclose(batch.z_star.z, dp.z_star.z, rtol=1e-6, atol=1e-6)


def test_offline_optimum_for_general_costs(sweep_canonical):
    zcost = _pseudo_huber_zcost(sweep_canonical)
    solution = offline_optimal(zcost)
    assert solution.method == "batch_tm"
    assert solution.cross_check is None
    # stationary point of a strongly convex objective
    rng = np.random.default_rng(1)
    for _ in range(3):
        z = solution.z_star.z + rng.normal(scale=0.1, size=solution.z_star.z.shape)
        assert zcost.value(z) >= solution.J_star
    with pytest.raises(ValueError):
        offline_optimal(zcost, method="dp")


def test_unknown_offline_method(quadratic_zcost):
    with pytest.raises(ValueError):
        offline_optimal(quadratic_zcost, method="simplex")


def test_input_to_state_norm_single_step(sweep_canonical, sweep_zcost):
    # one step from x0 = 0: x_1 = B u
    assert input_to_state_norm(sweep_zcost, 1) == pytest.approx(np.linalg.norm(sweep_canonical.B_hat, 2))


@pytest.mark.parametrize("t, W", [(3, 4), (17, 6)])
def test_truncated_gradient_matches_differences(sweep_zcost, t, W):
    zcost = sweep_zcost
    provider = WindowedCostProvider(zcost.costs)
    provider.reveal(zcost.N)
    x_t = np.array([1.0, -2.0])
    problem = TruncatedProblem(zcost, provider, t, W, x_t)
    rng = np.random.default_rng(t)
    U = rng.normal(size=(problem.horizon, 1))

    def objective(U):
        states = problem.rollout(U)
        value = sum(zcost.costs.control_cost(t + k).value(U[k]) for k in range(problem.horizon))
        value += sum(zcost.costs.state_cost(t + k).value(states[k]) for k in range(problem.horizon))
        if problem.terminal:
            value += zcost.costs.state_cost(t + problem.horizon).value(states[problem.horizon])
        return value

    grad = problem.gradient(U)
    step = 1e-6
    for k in range(problem.horizon):
        shifted = U.copy()
        shifted[k, 0] += step
        plus = objective(shifted)
        shifted[k, 0] -= 2 * step
        minus = objective(shifted)
        assert grad[k, 0] == pytest.approx((plus - minus) / (2 * step), rel=1e-5, abs=1e-5)


def test_submpc_run_accounting(sweep_zcost):
    zcost = sweep_zcost
    J_star = offline_optimal(zcost).J_star
    for iterations, W in ((1, 3), (3, 5)):
        run = submpc_run(zcost, W, iterations)
        assert run.algorithm == f"submpc-{iterations}"
        assert run.gradient_evaluations == zcost.N * iterations * 2 * W
        assert run.lookahead_excess <= 0
        report = dynamic_regret(run, J_star, zcost.zeta)
        assert report.regret >= 0
        assert np.isnan(report.bound_factor)


def test_submpc_rejects_empty_budget(sweep_zcost):
    with pytest.raises(ValueError):
        submpc_run(sweep_zcost, 3, 0)



def test_submpc_momentum_schedule():
    assert [submpc_momentum(k, 16.0, 0.0) for k in (1, 2, 3, 4)] == pytest.approx([0.0, 0.25, 0.4, 0.5])
    assert submpc_momentum(1, 16.0, 1.0) == pytest.approx(0.6)
    assert submpc_momentum(7, 16.0, 1.0) == pytest.approx(0.6)


@pytest.mark.parametrize("warm_start", [False, True])
def test_submpc_over_the_whole_horizon_is_optimal(sweep_zcost, warm_start):
    zcost = sweep_zcost
    J_star = offline_optimal(zcost).J_star
    run = submpc_run(zcost, zcost.N, 400, warm_start=warm_start)
    assert run.cost == pytest.approx(J_star, rel=1e-6)
    assert run.oracle_name == ("warm-start" if warm_start else "cold-start")
