"""Open-loop trajectory optimization by direct single shooting.

The decision variables are the stacked controls u_0..u_{K-1}; the objective
is the deterministic rollout cost

    J(u) = sum_t c_t(x_t, u_t) + c_K(x_K),   x_{t+1} = f(x_t, u_t),

with goal attraction and control bounds handled as smooth penalties inside
the cost. The gradient comes from a backward adjoint sweep over the rollout
Jacobians; the search direction from a limited-memory quasi-Newton update
with a backtracking Armijo line search.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import Array, NominalTrajectory, SystemModel
from .exceptions import NumericalFailure

ARMIJO_C1 = 1e-4
CURVATURE_SKIP = 1e-10


@dataclass(frozen=True)
class CostSpec:
    """Stage and terminal cost with analytic gradients.

    ``stage(t, x, u)`` and ``terminal(x)`` return nonnegative scalars; the
    gradient callables return arrays of matching dimension. Weight fields
    record how the cost was assembled (penalty weights may be zero).
    """

    stage: Callable[[int, Array, Array], float]
    terminal: Callable[[Array], float]
    stage_grad_x: Callable[[int, Array, Array], Array]
    stage_grad_u: Callable[[int, Array, Array], Array]
    terminal_grad: Callable[[Array], Array]
    effort_weight: float = 0.0
    goal_weight: float = 0.0
    bound_weight: float = 0.0
    goal: Optional[Array] = None


@dataclass(frozen=True)
class PlannerReport:
    """Outcome of one optimize_nominal call."""

    iterations: int
    final_cost: float
    terminal_position_error: float
    terminal_heading_error: float
    gradient_norm: float
    converged: bool
    cost_history: tuple[float, ...]
    max_bound_violation: float

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")


def goal_tracking_cost(
    model: SystemModel,
    x_g: Array,
    effort_weight: float = 0.1,
    goal_weight: float = 100.0,
    bound_weight: float = 100.0,
    heading_weight: float = 0.5,
) -> CostSpec:
    """Quadratic effort + quadratic goal penalty + hinge bound penalty.

    The terminal weight matrix is diag(1, ..., 1, heading_weight) with the
    reduced weight on the third (heading) component for planar models; the
    bound penalty is sum_i max(0, |u_i| - b_i)^2 against the model's
    symmetric control bounds, a C^1 function of u.
    """
    if min(effort_weight, goal_weight, bound_weight) < 0:
        raise ValueError("cost weights must be nonnegative")
    x_g = np.asarray(x_g, dtype=float)
    w_diag = np.ones(model.state_dim)
    if model.state_dim >= 3:
        w_diag[2] = heading_weight
    bounds = model.control_bounds()

    def stage(t: int, x: Array, u: Array) -> float:
        value = effort_weight * float(u @ u)
        if bounds is not None and bound_weight > 0:
            hinge = np.maximum(0.0, np.abs(u) - bounds)
            value += bound_weight * float(hinge @ hinge)
        return value

    def stage_grad_u(t: int, x: Array, u: Array) -> Array:
        grad = 2.0 * effort_weight * u
        if bounds is not None and bound_weight > 0:
            hinge = np.maximum(0.0, np.abs(u) - bounds)
            grad = grad + 2.0 * bound_weight * hinge * np.sign(u)
        return grad

    def stage_grad_x(t: int, x: Array, u: Array) -> Array:
        return np.zeros(model.state_dim)

    def terminal(x: Array) -> float:
        d = x - x_g
        return goal_weight * float(d @ (w_diag * d))

    def terminal_grad(x: Array) -> Array:
        return 2.0 * goal_weight * w_diag * (x - x_g)

    return CostSpec(
        stage=stage,
        terminal=terminal,
        stage_grad_x=stage_grad_x,
        stage_grad_u=stage_grad_u,
        terminal_grad=terminal_grad,
        effort_weight=effort_weight,
        goal_weight=goal_weight,
        bound_weight=bound_weight,
        goal=x_g,
    )


def _rollout_raw(model: SystemModel, x0: Array, controls: Array) -> Array:
    """Rollout through the unchecked transition (penalty evaluation path)."""
    states = np.empty((len(controls) + 1, model.state_dim))
    states[0] = x0
    for t, u in enumerate(controls):
        states[t + 1] = model.transition(states[t], u)
    return states


def nominal_cost(model: SystemModel, cost_spec: CostSpec, x0: Array, controls: Array) -> float:
    """Deterministic rollout cost of a control sequence (penalties included)."""
    controls = np.asarray(controls, dtype=float)
    if controls.ndim != 2 or len(controls) < 1:
        raise ValueError("controls must be a nonempty (K, n_u) array")
    x0 = np.asarray(x0, dtype=float)
    states = _rollout_raw(model, x0, controls)
    total = sum(cost_spec.stage(t, states[t], u) for t, u in enumerate(controls))
    return float(total + cost_spec.terminal(states[-1]))


def cost_gradient(model: SystemModel, cost_spec: CostSpec, x0: Array, controls: Array) -> Array:
    """Gradient of nominal_cost with respect to each control, via the adjoint.

    Backward sweep: lambda_K = dc_K/dx; g_t = dc_t/du + B_t^T lambda_{t+1};
    lambda_t = dc_t/dx + A_t^T lambda_{t+1}.
    """
    controls = np.asarray(controls, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    states = _rollout_raw(model, x0, controls)
    grad = np.empty_like(controls)
    lam = cost_spec.terminal_grad(states[-1])
    for t in range(len(controls) - 1, -1, -1):
        a, b = model.transition_jacobians(states[t], controls[t])
        grad[t] = cost_spec.stage_grad_u(t, states[t], controls[t]) + b.T @ lam
        lam = cost_spec.stage_grad_x(t, states[t], controls[t]) + a.T @ lam
    return grad


def _two_loop_direction(grad, s_list, y_list, rho_list):
    q = grad.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if s_list:
        gamma = (s_list[-1] @ y_list[-1]) / (y_list[-1] @ y_list[-1])
        q *= gamma
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        beta = rho * (y @ q)
        q += (a - beta) * s
    return -q


def _wrap_angle(a: float) -> float:
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def optimize_nominal(
    model: SystemModel,
    cost_spec: CostSpec,
    x0: Array,
    horizon: int | None = None,
    init_controls: Array | None = None,
    tolerance: float = 1e-6,
    max_iters: int = 500,
    step_floor: float = 1e-12,
    memory: int = 10,
) -> tuple[NominalTrajectory, PlannerReport]:
    """Minimize the nominal rollout cost over the control sequence.

    Accepted iterates have nonincreasing cost. Termination: gradient norm
    below ``tolerance`` or line-search step collapse (both reported as
    converged), else the iteration cap (converged=False, best iterate
    returned). The returned controls are projected onto the model bounds,
    so the stored trajectory re-rolls through the checked dynamics.
    """
    x0 = np.asarray(x0, dtype=float)
    if init_controls is None:
        if horizon is None:
            raise ValueError("provide horizon or init_controls")
        init_controls = np.zeros((horizon, model.control_dim))
    init_controls = np.asarray(init_controls, dtype=float)
    if horizon is not None and len(init_controls) != horizon:
        raise ValueError("init_controls length does not match horizon")
    if len(init_controls) < 1:
        raise ValueError("horizon must be >= 1")
    k, n_u = init_controls.shape

    def value(z: Array) -> float:
        j = nominal_cost(model, cost_spec, x0, z.reshape(k, n_u))
        if not np.isfinite(j):
            raise NumericalFailure(f"cost is not finite ({j})", iterate=z.reshape(k, n_u))
        return j

    def grad(z: Array) -> Array:
        return cost_gradient(model, cost_spec, x0, z.reshape(k, n_u)).ravel()

    z = init_controls.ravel().copy()
    j = value(z)
    g = grad(z)
    history = [j]
    best_z, best_j = z.copy(), j
    s_list: list[Array] = []
    y_list: list[Array] = []
    rho_list: list[float] = []
    iterations = 0
    converged = float(np.linalg.norm(g)) <= tolerance

    while not converged and iterations < max_iters:
        d = _two_loop_direction(g, s_list, y_list, rho_list)
        slope = d @ g
        if slope >= 0.0:  # degraded curvature memory; fall back to steepest descent
            s_list, y_list, rho_list = [], [], []
            d = -g
            slope = d @ g
        alpha = 1.0
        z_new = z + alpha * d
        j_new = value(z_new)
        while j_new > j + ARMIJO_C1 * alpha * slope:
            alpha *= 0.5
            if alpha < step_floor:
                break
            z_new = z + alpha * d
            j_new = value(z_new)
        if alpha < step_floor:
            converged = True  # step-size collapse at the resolution limit
            break
        g_new = grad(z_new)
        s, y = z_new - z, g_new - g
        sy = s @ y
        if sy > CURVATURE_SKIP * np.linalg.norm(s) * np.linalg.norm(y):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > memory:
                del s_list[0], y_list[0], rho_list[0]
        z, j, g = z_new, j_new, g_new
        history.append(j)
        if j < best_j:
            best_z, best_j = z.copy(), j
        iterations += 1
        if float(np.linalg.norm(g)) <= tolerance:
            converged = True

    controls = best_z.reshape(k, n_u)
    gradient_norm = float(np.linalg.norm(grad(best_z)))

    bounds = model.control_bounds()
    max_violation = 0.0
    if bounds is not None:
        max_violation = float(np.max(np.maximum(0.0, np.abs(controls) - bounds)))
        controls = np.array([model.clamp_control(u) for u in controls])

    final_cost = nominal_cost(model, cost_spec, x0, controls)
    trajectory = model.rollout_nominal(x0, controls)
    trajectory = NominalTrajectory(
        states=trajectory.states, controls=trajectory.controls, nominal_cost=final_cost
    )

    pos_err = np.nan
    head_err = np.nan
    if cost_spec.goal is not None:
        diff = trajectory.states[-1] - cost_spec.goal
        pos_err = float(np.linalg.norm(diff[: min(2, len(diff))]))
        if len(diff) >= 3:
            head_err = abs(_wrap_angle(float(diff[2])))

    report = PlannerReport(
        iterations=iterations,
        final_cost=final_cost,
        terminal_position_error=pos_err,
        terminal_heading_error=head_err,
        gradient_norm=gradient_norm,
        converged=converged,
        cost_history=tuple(history),
        max_bound_violation=max_violation,
    )
    return trajectory, report
