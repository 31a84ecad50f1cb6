import numpy as np
import pytest

from rhgc.core.errors import DimensionMismatch, IllConditioned, NotCanonical, NotControllable, SingularTransform
from rhgc.services.control.canonical import (
    LtiSystem,
    _select_chains,
    controllability_rank,
    to_canonical,
    transform_costs,
    verify_canonical,
)
from rhgc.services.control.costs import CostSequence, QuadraticCost
from rhgc.services.experiments.instances import random_controllable_system


def test_sweep_system_is_already_canonical(sweep_canonical):
    assert sweep_canonical.indices == (1,)
    assert sweep_canonical.p_list == (2,)
    assert sweep_canonical.p == 2
    np.testing.assert_array_equal(sweep_canonical.S_x, np.eye(2))
    np.testing.assert_array_equal(sweep_canonical.S_u, np.eye(1))


def test_verify_canonical_names_the_offending_entry():
    with pytest.raises(NotCanonical) as excinfo:
        verify_canonical(np.array([[0.5, 1.0], [0.0, 1.0]]), np.array([[0.0], [1.0]]))
    assert (excinfo.value.matrix, excinfo.value.row, excinfo.value.col) == ("A", 0, 0)

    with pytest.raises(NotCanonical) as excinfo:
        verify_canonical(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [2.0]]))
    assert excinfo.value.matrix == "B"


def test_multi_input_canonical_pattern():
    # blocks of length 2 and 1
    A = np.array([[0.0, 1.0, 0.0], [0.3, -0.2, 0.4], [0.1, 0.0, 0.5]])
    B = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    canonical = verify_canonical(A, B)
    assert canonical.indices == (1, 2)
    assert canonical.p_list == (2, 1)
    assert canonical.p == 2
    np.testing.assert_array_equal(canonical.A_I, A[[1, 2]])


@pytest.mark.parametrize("n, m, seed", [(2, 1, 0), (3, 1, 1), (4, 2, 2), (5, 2, 3), (4, 3, 4)])
def test_to_canonical_similarity(n, m, seed):
    rng = np.random.default_rng(seed)
    system = random_controllable_system(n, m, rng)
    canonical = to_canonical(system)

    assert sum(canonical.p_list) == n
    assert canonical.indices[-1] == n - 1
    S_x, S_u = canonical.S_x, canonical.S_u
    np.testing.assert_allclose(canonical.A_hat, S_x @ system.A @ np.linalg.inv(S_x), atol=1e-8)
    np.testing.assert_allclose(canonical.B_hat, S_x @ system.B @ np.linalg.inv(S_u), atol=1e-8)
    # the result satisfies the exact sparsity pattern
    verify_canonical(canonical.A_hat, canonical.B_hat, tolerance=0.0)


def test_dynamics_commute_with_the_transform(rng):
    system = random_controllable_system(3, 1, rng)
    canonical = to_canonical(system)
    x = rng.normal(size=3)
    u = rng.normal(size=1)
    np.testing.assert_allclose(
        canonical.S_x @ system.step(x, u),
        canonical.step(canonical.S_x @ x, canonical.S_u @ u),
        atol=1e-10,
    )


def test_uncontrollable_system_reports_rank():
    system = LtiSystem(A=np.diag([1.0, 2.0]), B=np.array([[1.0], [0.0]]))
    assert controllability_rank(system) == 1
    with pytest.raises(NotControllable) as excinfo:
        to_canonical(system)
    assert excinfo.value.rank_found == 1
    assert excinfo.value.n == 2


def test_rank_deficient_input_matrix_is_ill_conditioned(rng):
    A = rng.normal(size=(3, 3))
    b = rng.normal(size=(3, 1))
    with pytest.raises(IllConditioned):
        to_canonical(LtiSystem(A=A, B=np.hstack([b, b])))


def test_system_shapes_are_checked():
    with pytest.raises(DimensionMismatch):
        LtiSystem(A=np.zeros((2, 3)), B=np.zeros((2, 1)))
    with pytest.raises(DimensionMismatch):
        LtiSystem(A=np.zeros((2, 2)), B=np.zeros((3, 1)))


def test_transform_costs_preserves_trajectory_cost(rng):
    system = random_controllable_system(3, 1, rng)
    canonical = to_canonical(system)
    N = 4
    costs = CostSequence(
        [QuadraticCost(np.diag(rng.uniform(1, 2, 3)), rng.normal(size=3)) for _ in range(N + 1)],
        [QuadraticCost(np.eye(1) * 1.5) for _ in range(N)],
        x0=rng.normal(size=3),
    )
    moved = transform_costs(costs, canonical.S_x, canonical.S_u)
    states = rng.normal(size=(N + 1, 3))
    controls = rng.normal(size=(N, 1))
    assert moved.evaluate(states @ canonical.S_x.T, controls @ canonical.S_u.T) == pytest.approx(
        costs.evaluate(states, controls)
    )
    np.testing.assert_allclose(moved.x0, canonical.S_x @ costs.x0)


def test_transform_costs_rejects_singular_transform():
    costs = CostSequence([QuadraticCost(np.eye(2))] * 2, [QuadraticCost(np.eye(1))])
    with pytest.raises(SingularTransform) as excinfo:
        transform_costs(costs, np.zeros((2, 2)), np.eye(1))
    assert excinfo.value.which == "S_x"


def test_chains_follow_the_interleaved_scan():
    # A b_1 = b_2, so the first chain stops after b_1 even though b_1 alone reaches every state.
    A = np.zeros((4, 4))
    A[1, 0] = A[2, 1] = A[3, 2] = 1.0
    B = np.eye(4)[:, :2]
    system = LtiSystem(A=A, B=B)

    p_list, basis = _select_chains(system, pivot_tolerance=1e-9)
    assert p_list == [1, 3]
    # b_1 | b_2, A b_2, A^2 b_2
    np.testing.assert_array_equal(basis, np.eye(4))

    canonical = to_canonical(system)
    assert canonical.p_list == (1, 3)
    assert canonical.indices == (0, 3)


def test_chain_basis_is_grouped_by_input():
    # Scan order is b_1, b_2, A b_1, A b_2 (dependent), A^2 b_1; columns come out chain by chain.
    A = np.zeros((4, 4))
    A[2, 0] = A[0, 1] = A[3, 2] = 1.0
    B = np.eye(4)[:, :2]

    p_list, basis = _select_chains(LtiSystem(A=A, B=B), pivot_tolerance=1e-9)
    assert p_list == [3, 1]
    expected = np.eye(4)[:, [0, 2, 3, 1]]
    np.testing.assert_array_equal(basis, expected)
