import numpy as np
import pytest

from rhgc.core.errors import DimensionMismatch, OracleInformationViolation, StageOutOfRange
from rhgc.services.control.costs import (
    CostSequence,
    LinearlyTransformedCost,
    PseudoHuberCost,
    QuadraticCost,
    WindowedCostProvider,
)


def _numeric_gradient(cost, x, step=1e-6):
    grad = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (cost.value(x + e) - cost.value(x - e)) / (2 * step)
    return grad


def _sequence(N=3):
    state = [QuadraticCost(np.eye(2), np.full(2, float(t))) for t in range(N + 1)]
    control = [QuadraticCost(2.0 * np.eye(1)) for _ in range(N)]
    return CostSequence(state, control, x0=np.array([1.0, -1.0]))


def test_quadratic_value_gradient_and_constants():
    cost = QuadraticCost(np.diag([2.0, 4.0]), np.array([1.0, -1.0]))
    assert cost.value(np.zeros(2)) == pytest.approx(3.0)
    np.testing.assert_allclose(cost.gradient(np.zeros(2)), [-2.0, 4.0])
    assert cost.strong_convexity == pytest.approx(2.0)
    assert cost.smoothness == pytest.approx(4.0)
    np.testing.assert_allclose(cost.minimizer, [1.0, -1.0])


def test_pseudo_huber_gradient_matches_differences(rng):
    cost = PseudoHuberCost(np.array([0.5, -2.0, 1.0]), curvature=0.7, scale=0.3)
    x = rng.uniform(-3, 3, size=3)
    np.testing.assert_allclose(cost.gradient(x), _numeric_gradient(cost, x), rtol=1e-6, atol=1e-7)
    assert cost.strong_convexity == pytest.approx(0.7)
    assert cost.smoothness == pytest.approx(1.7)


def test_pseudo_huber_rejects_nonpositive_parameters():
    with pytest.raises(ValueError):
        PseudoHuberCost(np.zeros(2), curvature=0.0)


@pytest.mark.parametrize("base", [
    QuadraticCost(np.diag([1.0, 3.0]), np.array([2.0, -1.0])),
    PseudoHuberCost(np.array([2.0, -1.0])),
])
def test_transformed_cost_is_the_same_function(base, rng):
    S = np.array([[1.0, 0.5], [-0.3, 2.0]])
    S_inv = np.linalg.inv(S)
    moved = base.transformed(S, S_inv)
    for _ in range(5):
        x = rng.normal(size=2)
        assert moved.value(S @ x) == pytest.approx(base.value(x))
    np.testing.assert_allclose(moved.minimizer, S @ base.minimizer)


def test_transformed_constants_bound_the_curvature():
    base = PseudoHuberCost(np.zeros(2), curvature=1.0)
    S = np.array([[2.0, 0.0], [0.0, 0.5]])
    moved = LinearlyTransformedCost(base, S, np.linalg.inv(S))
    eigenvalues = np.linalg.eigvalsh(moved.hessian(np.array([0.3, -0.2])))
    assert moved.strong_convexity <= eigenvalues[0] + 1e-12
    assert eigenvalues[-1] <= moved.smoothness + 1e-12


def test_cost_sequence_constants_and_evaluate():
    costs = _sequence()
    assert costs.N == 3
    assert costs.mu_f == pytest.approx(1.0)
    assert costs.l_g == pytest.approx(2.0)
    assert costs.is_quadratic
    states = np.zeros((4, 2))
    controls = np.ones((3, 1))
    # sum_t 1/2 ||(t, t)||^2 + 3 * 1/2 * 2
    assert costs.evaluate(states, controls) == pytest.approx(0 + 1 + 4 + 9 + 3)


def test_cost_sequence_rejects_inconsistent_inputs():
    with pytest.raises(DimensionMismatch):
        CostSequence([QuadraticCost(np.eye(2))], [QuadraticCost(np.eye(1))])
    costs = _sequence()
    with pytest.raises(DimensionMismatch):
        costs.evaluate(np.zeros((3, 2)), np.zeros((3, 1)))
    with pytest.raises(StageOutOfRange):
        costs.control_cost(3)


def test_windowed_provider_gates_reads():
    provider = WindowedCostProvider(_sequence())
    provider.reveal(1)
    provider.state_cost(1)
    provider.control_cost(0)
    with pytest.raises(OracleInformationViolation) as excinfo:
        provider.state_cost(2)
    assert excinfo.value.stage == 2
    assert excinfo.value.limit == 1
    assert provider.max_stage_read == 1
    assert provider.max_excess == 0
    with pytest.raises(ValueError):
        provider.reveal(0)
