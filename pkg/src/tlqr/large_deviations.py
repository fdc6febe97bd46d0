"""Small-noise exit statistics for the feedback-compensated system.

The Freidlin-Wentzell action functional penalizes a path's velocity
deviation from the drift,

    S(phi) = 1 / (2 eps^2) * integral |phi_dot - b(t, phi)|^2 dt,

discretized here as a left-endpoint Riemann sum on the controller's step
grid. For the tracked system the drift is the feedback-compensated one-step
map converted to a rate, so the nominal trajectory has exactly zero action.
Exit probabilities from a radius-delta tube around the nominal decay like
exp(-rate / eps^2) as the noise level drops; ``fit_rate`` checks that
signature by regressing log p on 1 / eps^2.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ._stats import linear_fit, wilson_interval
from .dynamics import Array, SystemModel
from .exceptions import InsufficientData
from .lqr import TrackingPolicy, feedback_control
from .simulate import _CTX_EXIT, CLOSED_LOOP, derive_seed, rollout


@dataclass(frozen=True, eq=False)
class DriftField:
    """Per-step drift rate of a (possibly time-varying) discrete system.

    ``rate(t, x)`` returns the state increment per unit time at step t;
    ``nominal`` is a fixed path of the drift: nominal[t+1] = nominal[t]
    + dt * rate(t, nominal[t]) exactly.
    """

    rate: Callable[[int, Array], Array]
    nominal: Array
    dt: float
    horizon: Optional[int] = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")


def tracking_drift(model: SystemModel, policy: TrackingPolicy) -> DriftField:
    """Drift of the closed-loop tracked system: (f(x, u_fb(t, x)) - x) / dt."""
    dt = model.step_period
    if dt <= 0:
        raise ValueError("model step period must be positive")

    def rate(t: int, x: Array) -> Array:
        u = feedback_control(policy, t, x)
        return (model.step(x, u) - x) / dt

    return DriftField(rate=rate, nominal=policy.nominal.states, dt=dt, horizon=policy.horizon)


@dataclass(frozen=True, eq=False)
class PathSample:
    """A state path on the step grid; path[0] is the declared initial state."""

    path: Array
    dt: float

    def __post_init__(self):
        path = np.atleast_2d(np.asarray(self.path, dtype=float))
        if len(path) < 2:
            raise ValueError("path needs at least two points")
        object.__setattr__(self, "path", path)


def action_functional(field: DriftField, sample: PathSample, epsilon: float) -> float:
    """Discrete action of a path: dt / (2 eps^2) * sum |dphi/dt - rate|^2."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if sample.dt != field.dt:
        raise ValueError("path and drift use different step periods")
    steps = len(sample.path) - 1
    if field.horizon is not None and steps > field.horizon:
        raise ValueError("path is longer than the drift horizon")
    total = 0.0
    for t in range(steps):
        resid = (sample.path[t + 1] - sample.path[t]) / field.dt - field.rate(t, sample.path[t])
        total += float(resid @ resid)
    return total * field.dt / (2.0 * epsilon**2)


@dataclass(frozen=True)
class ExitEstimate:
    """Monte Carlo estimate of leaving the delta-tube by a given step."""

    delta: float
    epsilon: float
    n_runs: int
    n_exits: int
    p_hat: float
    wilson_low: float
    wilson_high: float

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "epsilon": self.epsilon,
            "n_runs": self.n_runs,
            "n_exits": self.n_exits,
            "p_hat": self.p_hat,
            "wilson_low": self.wilson_low,
            "wilson_high": self.wilson_high,
        }


def estimate_exit_probability(
    policy: TrackingPolicy,
    model: SystemModel,
    delta: float,
    epsilon: float,
    horizon_index: Optional[int] = None,
    n_runs: int = 1000,
    seed: int = 0,
) -> ExitEstimate:
    """Fraction of closed-loop runs whose deviation ever exceeds delta.

    A run exits when max_{s <= horizon_index} |x_s - x_nom_s| > delta
    (Euclidean norm on the full state). Per-run seeds derive from the given
    seed, so estimates with the same seed share trajectories exactly.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    k = policy.horizon
    t_max = k if horizon_index is None else horizon_index
    if not 0 <= t_max <= k:
        raise ValueError(f"horizon_index must lie in [0, {k}]")
    exits = 0
    for j in range(n_runs):
        run = rollout(policy, model, epsilon, CLOSED_LOOP, derive_seed(seed, _CTX_EXIT, j))
        dev = np.linalg.norm(run.states[: t_max + 1] - policy.nominal.states[: t_max + 1], axis=1)
        if dev.max() > delta:
            exits += 1
    p_hat = exits / n_runs
    low, high = wilson_interval(exits, n_runs)
    return ExitEstimate(
        delta=delta,
        epsilon=epsilon,
        n_runs=n_runs,
        n_exits=exits,
        p_hat=p_hat,
        wilson_low=low,
        wilson_high=high,
    )


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of log p_hat against 1 / eps^2."""

    slope: float
    intercept: float
    r_squared: float
    n_used: int

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "n_used": self.n_used,
        }


def fit_rate(estimates: Sequence[ExitEstimate]) -> RateFit:
    """Check the exponential decay signature of the exit probabilities.

    Only estimates with 0 < p_hat < 1 are usable; fewer than three raise
    :class:`InsufficientData`. A negative slope magnitude approximates the
    minimal action over exiting paths.
    """
    usable = [e for e in estimates if 0.0 < e.p_hat < 1.0]
    if len(usable) < 3:
        raise InsufficientData(
            f"need >= 3 estimates with 0 < p_hat < 1, have {len(usable)}"
        )
    x = np.array([1.0 / e.epsilon**2 for e in usable])
    y = np.array([np.log(e.p_hat) for e in usable])
    slope, intercept, r2 = linear_fit(x, y)
    return RateFit(slope=slope, intercept=intercept, r_squared=r2, n_used=len(usable))
