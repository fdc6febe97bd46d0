"""Wiring from experiment configurations to planned policies and studies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig, epsilon_grid
from .dynamics import KinematicCar, SystemModel
from .error_analysis import CostErrorStats, cost_error_statistics
from .exceptions import InsufficientData
from .large_deviations import ExitEstimate, RateFit, estimate_exit_probability, fit_rate
from .lqr import LqrWeights, TrackingPolicy, design_tracking_policy
from .planner import CostSpec, NominalTrajectory, PlannerReport, goal_tracking_cost, optimize_nominal
from .simulate import SweepResult, derive_seed, sweep_epsilon

# Seed context for the exit-probability study (sweep and rollout contexts
# live in simulate).
_CTX_LDP = 3


def build_model(config: ExperimentConfig) -> KinematicCar:
    m = config.model
    return KinematicCar(
        wheelbase=m.wheelbase,
        step_period=m.dt,
        v_max=m.v_max,
        phi_max=m.phi_max,
        integrator=m.integrator,
    )


def build_cost_spec(config: ExperimentConfig, model: SystemModel) -> CostSpec:
    p = config.planner
    return goal_tracking_cost(
        model,
        np.asarray(config.x_g),
        effort_weight=p.r_u,
        goal_weight=p.r_g,
        bound_weight=p.r_b,
    )


@dataclass(frozen=True, eq=False)
class PlannedExperiment:
    """Everything derived from one config: model, cost, nominal, policy."""

    config: ExperimentConfig
    model: SystemModel
    cost_spec: CostSpec
    trajectory: NominalTrajectory
    report: PlannerReport
    policy: TrackingPolicy


def plan_experiment(config: ExperimentConfig) -> PlannedExperiment:
    """Optimize the nominal trajectory and synthesize the tracking policy."""
    model = build_model(config)
    cost_spec = build_cost_spec(config, model)
    trajectory, report = optimize_nominal(
        model,
        cost_spec,
        np.asarray(config.x0),
        horizon=config.horizon,
        tolerance=config.planner.tolerance,
        max_iters=config.planner.max_iters,
    )
    weights = LqrWeights.constant(config.lqr.wx, config.lqr.wu, config.horizon)
    policy = design_tracking_policy(model, trajectory, weights)
    return PlannedExperiment(
        config=config,
        model=model,
        cost_spec=cost_spec,
        trajectory=trajectory,
        report=report,
        policy=policy,
    )


def run_sweep(
    planned: PlannedExperiment,
    modes=("closed_loop", "open_loop"),
    n_threads: int = 1,
    grid=None,
) -> SweepResult:
    """NMSE sweep over the configured (or overridden) epsilon grid."""
    cfg = planned.config.sweep
    if grid is None:
        grid = epsilon_grid(cfg.eps_start, cfg.eps_step, cfg.eps_end)
    return sweep_epsilon(
        planned.policy,
        planned.model,
        grid,
        cfg.n_runs,
        planned.config.master_seed,
        modes=modes,
        n_threads=n_threads,
    )


def run_exit_study(
    planned: PlannedExperiment,
) -> tuple[list[ExitEstimate], RateFit | None]:
    """Exit-probability estimates over the configured grid plus the rate fit.

    Returns (estimates, fit); fit is None when fewer than three estimates
    fall strictly inside (0, 1).
    """
    cfg = planned.config.ldp
    estimates = [
        estimate_exit_probability(
            planned.policy,
            planned.model,
            cfg.delta,
            eps,
            n_runs=cfg.n_runs,
            seed=derive_seed(planned.config.master_seed, _CTX_LDP, i),
        )
        for i, eps in enumerate(cfg.eps_grid)
    ]
    try:
        fit = fit_rate(estimates)
    except InsufficientData:
        fit = None
    return estimates, fit


def run_cost_error_study(
    planned: PlannedExperiment, epsilon: float = 0.05, n_samples: int = 100_000
) -> CostErrorStats:
    """Moment statistics of the first-order cost error on the planned policy."""
    seed = derive_seed(planned.config.master_seed, 4)
    return cost_error_statistics(
        planned.policy, planned.cost_spec, epsilon, n_samples, seed
    )
