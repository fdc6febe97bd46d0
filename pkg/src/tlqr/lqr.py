"""Finite-horizon time-varying LQR synthesis along a nominal trajectory.

Linearizing the dynamics at each nominal point gives an LTV system
(A_t, B_t); the backward Riccati recursion

    P_K = Wx_K
    L_t = (Wu_t + B_t^T P_{t+1} B_t)^{-1} B_t^T P_{t+1} A_t
    P_t = Wx_t + A_t^T P_{t+1} (A_t - B_t L_t)

yields gains for the tracking law u_t = u_nom_t - L_t (x_t - x_nom_t).
P is symmetrized after every step to suppress asymmetric round-off. The
value identity x0^T P_0 x0 = accumulated quadratic cost under the gains
holds for the noise-free LTV error dynamics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Array, NominalTrajectory, SystemModel
from .exceptions import NumericalFailure


@dataclass(frozen=True, eq=False)
class LtvSystem:
    """Time-indexed linearization: A stacked (K, n, n), B stacked (K, n, m)."""

    a: Array
    b: Array

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise ValueError("A must be a (K, n, n) stack of square matrices")
        if b.ndim != 3 or b.shape[0] != a.shape[0] or b.shape[1] != a.shape[1]:
            raise ValueError("B must be a (K, n, m) stack aligned with A")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def horizon(self) -> int:
        return self.a.shape[0]

    @property
    def state_dim(self) -> int:
        return self.a.shape[1]

    @property
    def control_dim(self) -> int:
        return self.b.shape[2]


@dataclass(frozen=True, eq=False)
class LqrWeights:
    """Quadratic tracking weights: wx has K+1 entries (terminal last), wu has K.

    Every wu must be symmetric positive definite so the gain inverse exists;
    wx entries must be symmetric positive semidefinite.
    """

    wx: Array
    wu: Array

    def __post_init__(self):
        wx = np.asarray(self.wx, dtype=float)
        wu = np.asarray(self.wu, dtype=float)
        if wx.ndim != 3 or wu.ndim != 3:
            raise ValueError("wx and wu must be stacks of matrices")
        if wx.shape[0] != wu.shape[0] + 1:
            raise ValueError("wx needs exactly one more entry than wu (terminal weight)")
        for name, stack in (("wx", wx), ("wu", wu)):
            if not np.allclose(stack, np.swapaxes(stack, 1, 2), atol=1e-12):
                raise ValueError(f"{name} entries must be symmetric")
        if np.linalg.eigvalsh(wu).min() <= 0.0:
            raise ValueError("wu entries must be positive definite")
        if np.linalg.eigvalsh(wx).min() < -1e-12:
            raise ValueError("wx entries must be positive semidefinite")
        object.__setattr__(self, "wx", wx)
        object.__setattr__(self, "wu", wu)

    @classmethod
    def constant(cls, wx_diag: Array, wu_diag: Array, horizon: int) -> "LqrWeights":
        """Time-invariant diagonal weights over the given horizon."""
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        wx = np.tile(np.diag(np.asarray(wx_diag, dtype=float)), (horizon + 1, 1, 1))
        wu = np.tile(np.diag(np.asarray(wu_diag, dtype=float)), (horizon, 1, 1))
        return cls(wx=wx, wu=wu)

    @property
    def horizon(self) -> int:
        return self.wu.shape[0]


@dataclass(frozen=True, eq=False)
class TrackingPolicy:
    """Nominal trajectory plus time-varying feedback gains.

    ``closed_loop[t]`` stores A_t - B_t L_t; ``riccati`` has K+1 entries with
    the terminal weight last. The model reference provides the execution-time
    control clamp.
    """

    nominal: NominalTrajectory
    gains: Array
    riccati: Array
    closed_loop: Array
    model: SystemModel

    def __post_init__(self):
        k = self.nominal.horizon
        if self.gains.shape[0] != k or self.closed_loop.shape[0] != k:
            raise ValueError("gains and closed_loop must have one entry per control step")
        if self.riccati.shape[0] != k + 1:
            raise ValueError("riccati must have K+1 entries")

    @property
    def horizon(self) -> int:
        return self.nominal.horizon


def linearize_along(model: SystemModel, nominal: NominalTrajectory) -> LtvSystem:
    """Jacobians of the transition map at every nominal (state, control) pair."""
    k = nominal.horizon
    a = np.empty((k, model.state_dim, model.state_dim))
    b = np.empty((k, model.state_dim, model.control_dim))
    for t in range(k):
        a[t] = model.jacobian_state(nominal.states[t], nominal.controls[t])
        b[t] = model.jacobian_control(nominal.states[t], nominal.controls[t])
    return LtvSystem(a=a, b=b)


def riccati_backward(sys: LtvSystem, weights: LqrWeights) -> tuple[Array, Array]:
    """Backward Riccati recursion; returns (gains (K, m, n), riccati (K+1, n, n))."""
    if weights.horizon != sys.horizon:
        raise ValueError("weights horizon does not match the LTV system")
    k, n, m = sys.horizon, sys.state_dim, sys.control_dim
    gains = np.empty((k, m, n))
    riccati = np.empty((k + 1, n, n))
    riccati[k] = 0.5 * (weights.wx[k] + weights.wx[k].T)
    for t in range(k - 1, -1, -1):
        a, b = sys.a[t], sys.b[t]
        p_next = riccati[t + 1]
        gram = weights.wu[t] + b.T @ p_next @ b
        try:
            gains[t] = np.linalg.solve(gram, b.T @ p_next @ a)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"singular gain system at step {t}") from exc
        p = weights.wx[t] + a.T @ p_next @ (a - b @ gains[t])
        riccati[t] = 0.5 * (p + p.T)
    return gains, riccati


def design_tracking_policy(
    model: SystemModel, nominal: NominalTrajectory, weights: LqrWeights
) -> TrackingPolicy:
    """Linearize along the nominal and synthesize the tracking gains."""
    sys = linearize_along(model, nominal)
    gains, riccati = riccati_backward(sys, weights)
    closed_loop = sys.a - np.einsum("tnm,tmk->tnk", sys.b, gains)
    return TrackingPolicy(
        nominal=nominal, gains=gains, riccati=riccati, closed_loop=closed_loop, model=model
    )


def feedback_control(policy: TrackingPolicy, t: int, x: Array) -> Array:
    """Tracking control u_nom_t - L_t (x - x_nom_t), clamped to model bounds."""
    if not 0 <= t <= policy.horizon - 1:
        raise ValueError(f"time index {t} outside [0, {policy.horizon - 1}]")
    x = np.asarray(x, dtype=float)
    u = policy.nominal.controls[t] - policy.gains[t] @ (x - policy.nominal.states[t])
    return policy.model.clamp_control(u)
