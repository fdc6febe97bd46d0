import numpy as np
import pytest

from tlqr import (
    KinematicCar,
    LinearSystem,
    NumericalFailure,
    cost_gradient,
    goal_tracking_cost,
    nominal_cost,
    optimize_nominal,
)
from tlqr.planner import CostSpec

CAR = KinematicCar()
X0 = np.array([-1.5, 0.5, 0.0])
X_GOAL = np.array([-0.5, 1.0, 0.0])


def fd_gradient(model, cost_spec, x0, controls, h=1e-5):
    grad = np.empty_like(controls)
    for t in range(controls.shape[0]):
        for i in range(controls.shape[1]):
            up = controls.copy()
            up[t, i] += h
            down = controls.copy()
            down[t, i] -= h
            grad[t, i] = (
                nominal_cost(model, cost_spec, x0, up) - nominal_cost(model, cost_spec, x0, down)
            ) / (2 * h)
    return grad


def test_cost_zero_at_goal_with_zero_controls():
    cost = goal_tracking_cost(CAR, X0, effort_weight=0.0, goal_weight=1.0, bound_weight=0.0)
    assert nominal_cost(CAR, cost, X0, np.zeros((20, 2))) == 0.0


def test_cost_hand_value_goal_penalty():
    cost = goal_tracking_cost(
        CAR, X_GOAL, effort_weight=0.0, goal_weight=1.0, bound_weight=0.0, heading_weight=1.0
    )
    assert nominal_cost(CAR, cost, X0, np.zeros((20, 2))) == pytest.approx(1.25, abs=1e-12)


def test_cost_linear_in_goal_weight():
    c1 = goal_tracking_cost(CAR, X_GOAL, effort_weight=0.0, goal_weight=1.0, bound_weight=0.0)
    c2 = goal_tracking_cost(CAR, X_GOAL, effort_weight=0.0, goal_weight=2.0, bound_weight=0.0)
    controls = np.tile([0.3, 0.1], (8, 1))
    assert nominal_cost(CAR, c2, X0, controls) == pytest.approx(
        2.0 * nominal_cost(CAR, c1, X0, controls), rel=1e-14
    )


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    cost = goal_tracking_cost(CAR, X_GOAL)
    for case in range(20):
        k = int(rng.integers(2, 8))
        controls = np.column_stack(
            [rng.uniform(-0.45, 0.45, size=k), rng.uniform(-1.1, 1.1, size=k)]
        )
        if case % 5 == 0:  # exercise the bound-penalty branch
            controls[0] = [0.75, 1.7]
        x0 = rng.uniform(-1, 1, size=3)
        grad = cost_gradient(CAR, cost, x0, controls)
        fd = fd_gradient(CAR, cost, x0, controls)
        assert np.linalg.norm(grad - fd) <= 1e-5 * max(np.linalg.norm(fd), 1.0)


def test_gradient_effort_only_closed_form():
    cost = goal_tracking_cost(CAR, X_GOAL, effort_weight=0.25, goal_weight=0.0, bound_weight=0.0)
    controls = np.tile([0.2, -0.3], (6, 1))
    np.testing.assert_allclose(
        cost_gradient(CAR, cost, X0, controls), 2 * 0.25 * controls, atol=1e-15
    )


def test_optimum_at_start_returns_immediately():
    cost = goal_tracking_cost(CAR, X0, effort_weight=0.1, goal_weight=100.0)
    traj, report = optimize_nominal(CAR, cost, X0, horizon=10)
    assert report.converged
    assert report.iterations <= 1
    assert report.final_cost == 0.0
    assert np.all(traj.controls == 0.0)


def test_reference_instance_reaches_goal(car_experiment):
    planned, _seconds = car_experiment
    report = planned.report
    assert report.converged
    assert report.gradient_norm <= 1e-6
    assert report.terminal_position_error <= 0.05
    assert report.terminal_heading_error <= 0.1
    assert report.max_bound_violation <= 1e-3


def test_cost_history_monotone(car_experiment):
    planned, _ = car_experiment
    hist = planned.report.cost_history
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_returned_trajectory_refeasible(car_experiment):
    planned, _ = car_experiment
    traj = planned.trajectory
    rerolled = planned.model.rollout_nominal(traj.states[0], traj.controls)
    np.testing.assert_allclose(rerolled.states, traj.states, rtol=0, atol=1e-12)


def test_stored_cost_matches_recompute(car_experiment):
    planned, _ = car_experiment
    traj = planned.trajectory
    recomputed = nominal_cost(planned.model, planned.cost_spec, traj.states[0], traj.controls)
    assert traj.nominal_cost == pytest.approx(recomputed, rel=1e-10)


def _linear_quadratic_optimum(model, x0, goal, r_u, r_g, k):
    """Least-squares solution of min r_u|u|^2 + r_g|x_K - goal|^2."""
    n, m = model.state_dim, model.control_dim
    a, b = model.a, model.b
    powers = [np.eye(n)]
    for _ in range(k):
        powers.append(a @ powers[-1])
    stacked = np.hstack([powers[k - 1 - t] @ b for t in range(k)])
    d = powers[k] @ x0 - goal
    lhs = r_u * np.eye(k * m) + r_g * stacked.T @ stacked
    return np.linalg.solve(lhs, -r_g * stacked.T @ d).reshape(k, m)


def test_linear_model_matches_least_squares_and_weight_scaling():
    model = LinearSystem(a=[[1.0, 0.1], [0.0, 1.0]], b=[[0.0], [1.0]])
    x0 = np.array([1.0, 0.0])
    goal = np.array([0.0, 0.0])
    k = 6
    expected = _linear_quadratic_optimum(model, x0, goal, r_u=0.5, r_g=10.0, k=k)
    cost = goal_tracking_cost(model, goal, effort_weight=0.5, goal_weight=10.0, bound_weight=0.0)
    traj, report = optimize_nominal(model, cost, x0, horizon=k, tolerance=1e-10)
    assert report.converged
    np.testing.assert_allclose(traj.controls, expected, atol=1e-6)

    lam = 7.3  # uniform weight scaling leaves the argmin unchanged
    scaled = goal_tracking_cost(
        model, goal, effort_weight=lam * 0.5, goal_weight=lam * 10.0, bound_weight=0.0
    )
    traj2, _ = optimize_nominal(model, scaled, x0, horizon=k, tolerance=1e-10)
    np.testing.assert_allclose(traj2.controls, traj.controls, atol=1e-6)


def test_non_convergence_returns_best_iterate():
    cost = goal_tracking_cost(CAR, X_GOAL)
    traj, report = optimize_nominal(CAR, cost, X0, horizon=20, max_iters=1)
    assert not report.converged
    assert report.iterations == 1
    assert len(report.cost_history) == 2
    assert traj.nominal_cost <= report.cost_history[0]


def test_nan_cost_raises_numerical_failure():
    def bad_stage(t, x, u):
        return np.nan

    cost = CostSpec(
        stage=bad_stage,
        terminal=lambda x: 0.0,
        stage_grad_x=lambda t, x, u: np.zeros(3),
        stage_grad_u=lambda t, x, u: np.zeros(2),
        terminal_grad=lambda x: np.zeros(3),
    )
    with pytest.raises(NumericalFailure) as exc:
        optimize_nominal(CAR, cost, X0, horizon=4)
    assert exc.value.iterate is not None


def test_init_controls_validation():
    cost = goal_tracking_cost(CAR, X_GOAL)
    with pytest.raises(ValueError):
        optimize_nominal(CAR, cost, X0, horizon=5, init_controls=np.zeros((4, 2)))
    with pytest.raises(ValueError):
        optimize_nominal(CAR, cost, X0)
