import numpy as np
import pytest

from tlqr import (
    KinematicCar,
    LinearSystem,
    LqrWeights,
    LtvSystem,
    NominalTrajectory,
    TrackingPolicy,
    design_tracking_policy,
    feedback_control,
    linearize_along,
    riccati_backward,
)
from tlqr.verify import random_ltv_instance, simulated_quadratic_cost, value_identity_error

CAR = KinematicCar()
X0 = np.array([-1.5, 0.5, 0.0])


def scalar_policy(gain: float) -> TrackingPolicy:
    """Unbounded scalar system with a single constant feedback gain."""
    model = LinearSystem(a=[[1.0]], b=[[1.0]])
    nominal = NominalTrajectory(states=np.zeros((2, 1)), controls=np.zeros((1, 1)))
    return TrackingPolicy(
        nominal=nominal,
        gains=np.array([[[gain]]]),
        riccati=np.zeros((2, 1, 1)),
        closed_loop=np.array([[[1.0 - gain]]]),
        model=model,
    )


def test_linearize_constant_nominal():
    traj = CAR.rollout_nominal(X0, np.zeros((5, 2)))
    sys = linearize_along(CAR, traj)
    assert sys.horizon == 5
    for t in range(1, 5):
        np.testing.assert_array_equal(sys.a[t], sys.a[0])
        np.testing.assert_array_equal(sys.b[t], sys.b[0])


def test_linearize_matches_dynamics_hand_values():
    u = np.array([0.6, 0.0])
    traj = NominalTrajectory(states=np.vstack([X0, CAR.step(X0, u)]), controls=u[None, :])
    sys = linearize_along(CAR, traj)
    np.testing.assert_allclose(sys.a[0], [[1, 0, 0], [0, 1, 0.42], [0, 0, 1]], atol=1e-12)
    np.testing.assert_allclose(sys.b[0], [[0.7, 0], [0, 0], [0, 0.84]], atol=1e-12)


def test_riccati_scalar_hand_fixture():
    sys = LtvSystem(a=np.ones((2, 1, 1)), b=np.ones((2, 1, 1)))
    gains, riccati = riccati_backward(sys, LqrWeights.constant([1.0], [1.0], 2))
    np.testing.assert_allclose(riccati.ravel(), [1.6, 1.5, 1.0], atol=1e-12)
    np.testing.assert_allclose(gains.ravel(), [0.6, 0.5], atol=1e-12)


def test_riccati_no_actuation_reduces_to_open_loop():
    rng = np.random.default_rng(5)
    k, n = 6, 3
    a = rng.uniform(-1, 1, size=(k, n, n))
    sys = LtvSystem(a=a, b=np.zeros((k, n, 1)))
    gains, riccati = riccati_backward(sys, LqrWeights.constant(np.ones(n), [1.0], k))
    assert np.all(gains == 0.0)
    expected = np.eye(n)
    for t in range(k - 1, -1, -1):  # oracle: P_t = Wx + A^T P_{t+1} A
        expected = np.eye(n) + a[t].T @ expected @ a[t]
        expected = 0.5 * (expected + expected.T)
    np.testing.assert_allclose(riccati[0], expected, atol=1e-10)


def test_riccati_zero_state_weight_gives_zero():
    k, n = 4, 2
    rng = np.random.default_rng(8)
    sys = LtvSystem(a=rng.uniform(-1, 1, (k, n, n)), b=rng.uniform(-1, 1, (k, n, 1)))
    weights = LqrWeights(wx=np.zeros((k + 1, n, n)), wu=np.tile(np.eye(1), (k, 1, 1)))
    gains, riccati = riccati_backward(sys, weights)
    assert np.all(gains == 0.0) and np.all(riccati == 0.0)


def test_value_identity_on_random_instances():
    assert value_identity_error(n_instances=100, seed=1002) <= 1e-8


def test_gain_perturbation_never_beats_optimum():
    rng = np.random.default_rng(17)
    for _ in range(20):
        sys, weights = random_ltv_instance(rng, max_nx=3, max_k=10)
        gains, _ = riccati_backward(sys, weights)
        x0 = rng.uniform(-1, 1, size=sys.state_dim)
        base = simulated_quadratic_cost(sys, weights, gains, x0)
        t = int(rng.integers(0, sys.horizon))
        direction = rng.standard_normal(gains[t].shape)
        direction *= 1e-3 / np.linalg.norm(direction)
        perturbed = gains.copy()
        perturbed[t] = perturbed[t] + direction
        assert simulated_quadratic_cost(sys, weights, perturbed, x0) >= base - 1e-12


def test_policy_invariants(car_experiment):
    planned, _ = car_experiment
    policy = planned.policy
    k = policy.horizon
    assert policy.riccati.shape[0] == k + 1
    for p in policy.riccati:
        assert np.linalg.norm(p - p.T) <= 1e-10
        assert np.linalg.eigvalsh(p).min() >= -1e-10
    np.testing.assert_array_equal(policy.riccati[k], np.eye(3))
    sys = linearize_along(planned.model, policy.nominal)
    for t in range(k):
        np.testing.assert_allclose(
            policy.closed_loop[t], sys.a[t] - sys.b[t] @ policy.gains[t], atol=1e-12
        )


def test_feedback_on_nominal_returns_nominal_control(car_experiment):
    planned, _ = car_experiment
    policy = planned.policy
    for t in (0, 7, policy.horizon - 1):
        np.testing.assert_array_equal(
            feedback_control(policy, t, policy.nominal.states[t]), policy.nominal.controls[t]
        )


def test_feedback_scalar_value_and_linearity():
    policy = scalar_policy(0.5)
    assert feedback_control(policy, 0, np.array([1.0]))[0] == pytest.approx(-0.5)
    u1 = feedback_control(policy, 0, np.array([0.3]))
    u2 = feedback_control(policy, 0, np.array([0.6]))
    np.testing.assert_allclose(u2, 2 * u1, atol=1e-15)


def test_feedback_time_index_validated():
    policy = scalar_policy(0.5)
    with pytest.raises(ValueError):
        feedback_control(policy, 1, np.array([0.0]))
    with pytest.raises(ValueError):
        feedback_control(policy, -1, np.array([0.0]))


def test_feedback_clamps_to_car_bounds(car_experiment):
    planned, _ = car_experiment
    policy = planned.policy
    u = feedback_control(policy, 0, policy.nominal.states[0] + np.array([5.0, -5.0, 1.0]))
    assert abs(u[0]) <= planned.model.v_max
    assert abs(u[1]) < planned.model.phi_max


def test_closed_loop_error_contracts_after_startup(car_experiment):
    planned, _ = car_experiment
    policy, model = planned.policy, planned.model
    direction = np.array([1.0, 1.0, 1.0]) / np.sqrt(3)
    x = policy.nominal.states[0] + 0.05 * direction
    errs = [0.05]
    for t in range(policy.horizon):
        x = model.step(x, feedback_control(policy, t, x))
        errs.append(np.linalg.norm(x - policy.nominal.states[t + 1]))
    assert all(b <= a + 1e-12 for a, b in zip(errs[3:], errs[4:]))


def test_weights_validation():
    with pytest.raises(ValueError):
        LqrWeights.constant([1.0, 1.0], [0.0], 3)  # singular control weight
    with pytest.raises(ValueError):
        LqrWeights.constant([-1.0, 1.0], [1.0], 3)  # indefinite state weight
    with pytest.raises(ValueError):
        LqrWeights(wx=np.zeros((3, 2, 2)), wu=np.zeros((3, 1, 1)))  # length mismatch


def test_design_policy_round_trip(car_experiment):
    planned, _ = car_experiment
    rebuilt = design_tracking_policy(
        planned.model, planned.trajectory, LqrWeights.constant(np.ones(3), np.ones(2), 20)
    )
    np.testing.assert_array_equal(rebuilt.gains, planned.policy.gains)
    np.testing.assert_array_equal(rebuilt.riccati, planned.policy.riccati)
