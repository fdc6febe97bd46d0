"""Discrete-time nonlinear system models with Jacobian access.

A model owns a deterministic transition map ``x_{t+1} = f(x_t, u_t)`` on a
fixed step period, exposes its Jacobians with respect to state and control,
and describes additive process noise ``x_{t+1} = f(x_t, u_t) + w_t``.

The built-in :class:`KinematicCar` discretizes the planar car kinematics

    x' = v cos(theta),  y' = v sin(theta),  theta' = (v / L) tan(phi)

with an explicit Euler step by default (RK4 is available as an opt-in
integrator for robustness studies; the Euler map keeps the Jacobians
hand-checkable: A = I + dt * J_x, B = dt * J_u).
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .exceptions import BoundViolation, DomainError

Array = np.ndarray


@dataclass(frozen=True, eq=False)
class NominalTrajectory:
    """A dynamically feasible state/control pair sequence.

    ``states`` has one more row than ``controls``; ``nominal_cost`` is filled
    in by the planner once a cost specification is attached.
    """

    states: Array
    controls: Array
    nominal_cost: float | None = None

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        controls = np.asarray(self.controls, dtype=float)
        if states.ndim != 2 or controls.ndim != 2:
            raise ValueError("states and controls must be 2-d arrays")
        if len(states) != len(controls) + 1:
            raise ValueError(
                f"expected K+1 states for K controls, got {len(states)} states "
                f"and {len(controls)} controls"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)

    @property
    def horizon(self) -> int:
        return len(self.controls)

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def control_dim(self) -> int:
        return self.controls.shape[1]


class SystemModel(ABC):
    """Deterministic discrete-time transition map with Jacobian access.

    All operations are pure functions of their arguments; instances are
    immutable and safe to share across threads.
    """

    state_dim: int
    control_dim: int
    step_period: float

    # -- raw evaluation (no bound checks); used by penalty-method planners
    # that must evaluate candidate controls outside the admissible box.

    @abstractmethod
    def transition(self, x: Array, u: Array) -> Array:
        """The map f(x, u) without control-bound enforcement."""

    @abstractmethod
    def transition_jacobians(self, x: Array, u: Array) -> tuple[Array, Array]:
        """Jacobians (d f/d x, d f/d u) without control-bound enforcement."""

    # -- bound handling; identity for unconstrained models.

    def clamp_control(self, u: Array) -> Array:
        """Project a control onto the admissible set (identity by default)."""
        return np.asarray(u, dtype=float)

    def validate_control(self, u: Array) -> None:
        """Raise :class:`BoundViolation` for out-of-bounds controls."""

    def control_bounds(self) -> Array | None:
        """Per-component symmetric bound magnitudes, or None if unbounded."""
        return None

    # -- checked public surface.

    def _check_dims(self, x: Array, u: Array) -> tuple[Array, Array]:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.shape != (self.state_dim,):
            raise ValueError(f"state has shape {x.shape}, expected ({self.state_dim},)")
        if u.shape != (self.control_dim,):
            raise ValueError(f"control has shape {u.shape}, expected ({self.control_dim},)")
        return x, u

    def step(self, x: Array, u: Array) -> Array:
        """One noise-free transition; validates dimensions and bounds."""
        x, u = self._check_dims(x, u)
        self.validate_control(u)
        return self.transition(x, u)

    def step_noisy(self, x: Array, u: Array, w: Array) -> Array:
        """One transition with additive noise: step(x, u) + w."""
        w = np.asarray(w, dtype=float)
        if w.shape != (self.state_dim,):
            raise ValueError(f"noise has shape {w.shape}, expected ({self.state_dim},)")
        return self.step(x, u) + w

    def jacobian_state(self, x: Array, u: Array) -> Array:
        """Jacobian of the transition map with respect to the state."""
        x, u = self._check_dims(x, u)
        self._check_smooth_domain(u)
        return self.transition_jacobians(x, u)[0]

    def jacobian_control(self, x: Array, u: Array) -> Array:
        """Jacobian of the transition map with respect to the control."""
        x, u = self._check_dims(x, u)
        self._check_smooth_domain(u)
        return self.transition_jacobians(x, u)[1]

    def _check_smooth_domain(self, u: Array) -> None:
        """Raise :class:`DomainError` at singular points (none by default)."""

    def rollout_nominal(self, x0: Array, controls: Array) -> NominalTrajectory:
        """Propagate x0 through the given control sequence.

        Returns K+1 states for K controls; each step goes through the
        bound-checked :meth:`step`.
        """
        controls = np.asarray(controls, dtype=float)
        if controls.ndim != 2 or len(controls) == 0:
            raise ValueError("controls must be a nonempty (K, n_u) array")
        states = np.empty((len(controls) + 1, self.state_dim))
        states[0] = np.asarray(x0, dtype=float)
        for t, u in enumerate(controls):
            states[t + 1] = self.step(states[t], u)
        return NominalTrajectory(states=states, controls=controls)


@dataclass(frozen=True, eq=False)
class KinematicCar(SystemModel):
    """Car-like robot: state (x, y, theta), control (v, phi).

    Controls are bounded by |v| <= v_max and |phi| < phi_max; the heading
    rate tan(phi)/L is singular at |phi| = phi_max when phi_max = pi/2.
    step_period = 0 is tolerated as a degenerate test configuration.
    """

    wheelbase: float = 0.5
    step_period: float = 0.7
    v_max: float = 0.6
    phi_max: float = np.pi / 2
    integrator: str = "euler"

    state_dim: int = field(default=3, init=False, repr=False)
    control_dim: int = field(default=2, init=False, repr=False)

    def __post_init__(self):
        if self.wheelbase <= 0:
            raise ValueError("wheelbase must be positive")
        if self.step_period < 0:
            raise ValueError("step_period must be nonnegative")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")
        if not 0 < self.phi_max <= np.pi / 2:
            raise ValueError("phi_max must lie in (0, pi/2]")
        if self.integrator not in ("euler", "rk4"):
            raise ValueError(f"unknown integrator '{self.integrator}'")

    def _drift(self, x: Array, u: Array) -> Array:
        v, phi = u
        theta = x[2]
        return np.array([v * np.cos(theta), v * np.sin(theta), v / self.wheelbase * np.tan(phi)])

    def _drift_jacobians(self, x: Array, u: Array) -> tuple[Array, Array]:
        v, phi = u
        theta = x[2]
        ct, st = np.cos(theta), np.sin(theta)
        jx = np.array([[0.0, 0.0, -v * st], [0.0, 0.0, v * ct], [0.0, 0.0, 0.0]])
        sec2 = 1.0 / np.cos(phi) ** 2
        ju = np.array(
            [[ct, 0.0], [st, 0.0], [np.tan(phi) / self.wheelbase, v * sec2 / self.wheelbase]]
        )
        return jx, ju

    def transition(self, x: Array, u: Array) -> Array:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        dt = self.step_period
        if self.integrator == "euler":
            return x + dt * self._drift(x, u)
        k1 = self._drift(x, u)
        k2 = self._drift(x + 0.5 * dt * k1, u)
        k3 = self._drift(x + 0.5 * dt * k2, u)
        k4 = self._drift(x + dt * k3, u)
        return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    def transition_jacobians(self, x: Array, u: Array) -> tuple[Array, Array]:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        dt = self.step_period
        eye = np.eye(3)
        if self.integrator == "euler":
            jx, ju = self._drift_jacobians(x, u)
            return eye + dt * jx, dt * ju
        # RK4: chain the stage Jacobians through the stage states.
        k1 = self._drift(x, u)
        j1x, j1u = self._drift_jacobians(x, u)
        x2 = x + 0.5 * dt * k1
        k2 = self._drift(x2, u)
        dx2, du2 = self._drift_jacobians(x2, u)
        j2x = dx2 @ (eye + 0.5 * dt * j1x)
        j2u = dx2 @ (0.5 * dt * j1u) + du2
        x3 = x + 0.5 * dt * k2
        k3 = self._drift(x3, u)
        dx3, du3 = self._drift_jacobians(x3, u)
        j3x = dx3 @ (eye + 0.5 * dt * j2x)
        j3u = dx3 @ (0.5 * dt * j2u) + du3
        x4 = x + dt * k3
        dx4, du4 = self._drift_jacobians(x4, u)
        j4x = dx4 @ (eye + dt * j3x)
        j4u = dx4 @ (dt * j3u) + du4
        a = eye + dt / 6.0 * (j1x + 2 * j2x + 2 * j3x + j4x)
        b = dt / 6.0 * (j1u + 2 * j2u + 2 * j3u + j4u)
        return a, b

    def clamp_control(self, u: Array) -> Array:
        v = np.clip(u[0], -self.v_max, self.v_max)
        # Strict bound: the largest representable angle below phi_max.
        phi_lim = np.nextafter(self.phi_max, 0.0)
        phi = np.clip(u[1], -phi_lim, phi_lim)
        return np.array([v, phi])

    def validate_control(self, u: Array) -> None:
        if abs(u[0]) > self.v_max:
            raise BoundViolation("v", float(u[0]), self.v_max)
        if abs(u[1]) >= self.phi_max:
            raise BoundViolation("phi", float(u[1]), self.phi_max)

    def control_bounds(self) -> Array:
        return np.array([self.v_max, self.phi_max])

    def _check_smooth_domain(self, u: Array) -> None:
        if abs(u[1]) >= self.phi_max:
            raise DomainError(
                f"heading-rate map is singular at |phi| >= phi_max ({self.phi_max:.6g}); "
                f"got phi = {u[1]:.6g}"
            )


@dataclass(frozen=True, eq=False)
class LinearSystem(SystemModel):
    """Unconstrained linear model x_{t+1} = A x_t + B u_t, mainly for tests."""

    a: Array
    b: Array
    step_period: float = 1.0

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise ValueError("A must be square")
        if b.shape[0] != a.shape[0]:
            raise ValueError("B row count must match A")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "state_dim", a.shape[0])
        object.__setattr__(self, "control_dim", b.shape[1])

    def transition(self, x: Array, u: Array) -> Array:
        return self.a @ np.asarray(x, dtype=float) + self.b @ np.asarray(u, dtype=float)

    def transition_jacobians(self, x: Array, u: Array) -> tuple[Array, Array]:
        return self.a.copy(), self.b.copy()


@dataclass(frozen=True)
class NoiseModel:
    """Isotropic additive Gaussian state noise.

    The per-component standard deviation is epsilon * base_sigma, where
    base_sigma is the largest control norm of a reference control sequence.
    epsilon = 0 yields exactly zero noise vectors.
    """

    epsilon: float
    base_sigma: float
    dim: int

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.base_sigma < 0:
            raise ValueError("base_sigma must be nonnegative")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    @property
    def sigma(self) -> float:
        return self.epsilon * self.base_sigma

    @property
    def covariance(self) -> Array:
        return self.sigma**2 * np.eye(self.dim)

    def sample(self, rng: np.random.Generator, length: int) -> Array:
        """Draw a (length, dim) noise sequence."""
        if self.sigma == 0.0:
            return np.zeros((length, self.dim))
        return self.sigma * rng.standard_normal((length, self.dim))
