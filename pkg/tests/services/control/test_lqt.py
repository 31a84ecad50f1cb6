import numpy as np
import pytest

from rhgc.core.errors import DimensionMismatch, LqtError
from rhgc.services.control.canonical import verify_canonical
from rhgc.services.control.costs import CostSequence, PseudoHuberCost, QuadraticCost
from rhgc.services.control.lqt import (
    QuadraticInstance,
    bias_function,
    corollary_bounds,
    dp_solve,
    random_quadratic_instance,
    riccati_envelope,
    riccati_residual,
    solve_dare,
    steady_state,
)
from rhgc.services.control.reformulate import ZCost
from tests.conftest import make_quadratic_zcost


def test_dp_value_formula_matches_simulated_cost():
    for seed in range(3):
        _, instance = make_quadratic_zcost(seed, n=3, m=1, N=15)
        dp = dp_solve(instance)
        assert dp.value_formula == pytest.approx(dp.J_star, rel=1e-9)


def test_dp_optimum_solves_the_z_system():
    zcost, instance = make_quadratic_zcost(5, n=4, m=2, N=12)
    dp = dp_solve(instance)
    z_dp = dp.x_star[1:, list(zcost.canonical.indices)]
    H, eta, _ = zcost.linear_system()
    z_direct = np.linalg.solve(H, eta)
    np.testing.assert_allclose(z_dp.ravel(), z_direct, rtol=1e-7, atol=1e-7)
    assert zcost.value(z_dp) == pytest.approx(dp.J_star, rel=1e-10)


def test_costate_controls_match(quadratic_zcost):
    instance = QuadraticInstance.from_costs(quadratic_zcost.canonical, quadratic_zcost.costs)
    dp = dp_solve(instance)
    np.testing.assert_allclose(dp.alpha_controls(), dp.u_star, rtol=1e-8, atol=1e-8)


def test_dare_fixed_point(sweep_canonical):
    Q = np.diag([1.3, 1.7])
    R = np.array([[1.2]])
    P = solve_dare(Q, R, sweep_canonical)
    np.testing.assert_allclose(P, P.T)
    assert np.all(np.linalg.eigvalsh(P) > 0)
    assert riccati_residual(P, Q, R, sweep_canonical) <= 1e-9


def test_riccati_envelope_contains_dare_solutions(sweep_canonical):
    low, high = riccati_envelope(1.0, 2.0, 1.0, 2.0, sweep_canonical)
    P = solve_dare(np.diag([1.5, 1.2]), np.array([[1.7]]), sweep_canonical)
    eigenvalues = np.linalg.eigvalsh(P)
    assert low <= eigenvalues[0] + 1e-9
    assert eigenvalues[-1] <= high + 1e-9


def test_steady_state_is_an_equilibrium(sweep_canonical):
    solution = steady_state(np.diag([1.3, 1.7]), np.array([[1.2]]), np.array([4.0, -3.0]), sweep_canonical)
    np.testing.assert_allclose(sweep_canonical.step(solution.x_e, solution.u_e), solution.x_e, atol=1e-12)


def test_bias_function_solves_the_average_cost_bellman_equation(sweep_canonical, rng):
    solution = bias_function(np.diag([1.3, 1.7]), np.array([[1.2]]), np.array([4.0, -3.0]), sweep_canonical)
    for _ in range(5):
        x = rng.uniform(-5, 5, size=2)
        assert abs(solution.bellman_residual(x, sweep_canonical)) <= 1e-8 * (1 + solution.bias(x))
    # the average cost equals the cost of the optimal steady state
    d = solution.x_e - solution.theta
    steady_cost = 0.5 * d @ solution.Q @ d + 0.5 * solution.u_e @ solution.R @ solution.u_e
    assert solution.lambda_e == pytest.approx(steady_cost, rel=1e-8)


def test_bias_requires_riccati_solution(sweep_canonical):
    solution = steady_state(np.eye(2), np.eye(1), np.zeros(2), sweep_canonical)
    with pytest.raises(LqtError):
        solution.bias(np.zeros(2))


def test_from_costs_rejects_non_quadratic(sweep_canonical):
    costs = CostSequence([PseudoHuberCost(np.zeros(2))] * 3, [QuadraticCost(np.eye(1))] * 2)
    assert QuadraticInstance.from_costs(sweep_canonical, costs) is None
    tracking = CostSequence([QuadraticCost(np.eye(2))] * 3, [QuadraticCost(np.eye(1), np.ones(1))] * 2)
    assert QuadraticInstance.from_costs(sweep_canonical, tracking) is None


def test_instance_shapes_are_checked(sweep_canonical):
    with pytest.raises(DimensionMismatch):
        QuadraticInstance(canonical=sweep_canonical, Q=np.ones((3, 2, 2)), R=np.ones((3, 1, 1)),
                          theta=np.zeros((3, 2)), Q_N=np.eye(2))


def test_random_instance_options(sweep_canonical):
    rng = np.random.default_rng(4)
    instance = random_quadratic_instance(sweep_canonical, 6, rng, time_invariant=True, terminal="dare")
    assert np.all(instance.Q == instance.Q[0])
    np.testing.assert_allclose(instance.Q_N, solve_dare(instance.Q[-1], instance.R[-1], sweep_canonical))
    assert np.all((instance.theta >= -10) & (instance.theta <= 10))
    with pytest.raises(ValueError):
        random_quadratic_instance(sweep_canonical, 6, rng, terminal="zero")


def test_corollary_terms(sweep_canonical):
    rng = np.random.default_rng(8)
    instance = random_quadratic_instance(sweep_canonical, 8, rng)
    previous = np.vstack([np.zeros((1, 2)), instance.theta[:-1]])
    terms = corollary_bounds(instance, dp_solve(instance))
    assert terms.theta_path_length == pytest.approx(np.sum(np.linalg.norm(instance.theta - previous, axis=1)))
    assert terms.P_variation >= 0
    assert terms.bias_variation is not None


def test_dp_handles_lower_bound_style_terminal_weight(sweep_canonical):
    Q = np.diag([1.3, 1.7])
    R = np.array([[1.2]])
    N = 10
    bias = bias_function(Q, R, np.array([4.0, -3.0]), sweep_canonical)
    instance = QuadraticInstance(
        canonical=sweep_canonical, Q=np.repeat(Q[None], N, axis=0), R=np.repeat(R[None], N, axis=0),
        theta=np.vstack([np.tile([4.0, -3.0], (N, 1)), bias.beta_e[None]]), Q_N=bias.P_e,
    )
    dp = dp_solve(instance)
    # the terminal weight is already the fixed point, so every P_t equals it
    for t in range(N + 1):
        np.testing.assert_allclose(dp.P[t], bias.P_e, rtol=1e-8, atol=1e-8)
    zcost = ZCost(sweep_canonical, instance.to_costs())
    assert zcost.value(dp.x_star[1:, [1]]) == pytest.approx(dp.J_star)


def test_average_cost_matches_long_run_simulation(sweep_canonical):
    Q, R, theta = np.diag([1.5, 1.2]), np.array([[1.3]]), np.array([3.0, -4.0])
    solution = bias_function(Q, R, theta, sweep_canonical)
    x = np.zeros(2)
    T = 5000
    total = 0.0
    for _ in range(T):
        u = solution.control(x)
        d = x - theta
        total += 0.5 * d @ Q @ d + 0.5 * u @ R @ u
        x = sweep_canonical.step(x, u)
    assert total / T == pytest.approx(solution.lambda_e, rel=2e-2)


def test_steady_state_beats_sampled_steady_states(sweep_canonical, rng):
    Q, R, theta = np.diag([1.3, 1.7]), np.array([[1.2]]), np.array([4.0, -3.0])
    solution = steady_state(Q, R, theta, sweep_canonical)

    def cost(x, u):
        d = x - theta
        return 0.5 * d @ Q @ d + 0.5 * u @ R @ u

    best = cost(solution.x_e, solution.u_e)
    for z in solution.z_e + rng.normal(scale=2.0, size=(200, 1)):
        assert best <= cost(solution.F_1 @ z, z - sweep_canonical.A_I @ solution.F_1 @ z) + 1e-12


def test_dare_without_dynamics_is_the_state_weight():
    canonical = verify_canonical(np.zeros((2, 2)), np.eye(2))
    Q = np.diag([1.4, 0.6])
    np.testing.assert_allclose(solve_dare(Q, np.eye(2), canonical), Q, atol=1e-12)


def test_time_invariant_weights_have_no_riccati_variation(sweep_canonical):
    instance = random_quadratic_instance(sweep_canonical, 10, np.random.default_rng(2), time_invariant=True,
                                         terminal="dare")
    terms = corollary_bounds(instance)
    assert terms.P_variation == pytest.approx(0.0, abs=1e-10)
    assert terms.bias_variation is None


def test_riccati_envelope_contains_every_dp_iterate(sweep_canonical):
    low, high = riccati_envelope(1.0, 2.0, 1.0, 2.0, sweep_canonical)
    for seed in range(3):
        instance = random_quadratic_instance(sweep_canonical, 20, np.random.default_rng(seed), terminal="dare")
        dp = dp_solve(instance)
        for P in dp.P:
            eigenvalues = np.linalg.eigvalsh(P)
            assert low <= eigenvalues[0] + 1e-9
            assert eigenvalues[-1] <= high + 1e-9
