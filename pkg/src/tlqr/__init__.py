"""Trajectory-optimized LQR toolkit.

Plan an open-loop nominal trajectory for a nonlinear system, synthesize a
finite-horizon time-varying LQR tracking law around it, and verify the
small-noise behavior of the combined design: linear error propagation,
zero-mean first-order cost error, NMSE decay, and exponential exit-rate
scaling.
"""
from .config import (
    ExperimentConfig,
    FULL_GRID,
    config_hash,
    default_config,
    epsilon_grid,
    load_config,
    parse_config,
)
from .dynamics import KinematicCar, LinearSystem, NoiseModel, NominalTrajectory, SystemModel
from .error_analysis import (
    CostErrorCoefficients,
    CostErrorStats,
    CostLinearization,
    Deviations,
    TransitionProducts,
    closed_loop_matrices,
    control_error_nonrecursive,
    cost_error_coefficients,
    cost_error_statistics,
    first_order_cost_error,
    linear_deviations,
    linearize_cost,
    state_error_nonrecursive,
)
from .exceptions import (
    BoundViolation,
    ConfigError,
    DomainError,
    InsufficientData,
    NumericalFailure,
)
from .experiments import (
    PlannedExperiment,
    build_cost_spec,
    build_model,
    plan_experiment,
    run_cost_error_study,
    run_exit_study,
    run_sweep,
)
from .large_deviations import (
    DriftField,
    ExitEstimate,
    PathSample,
    RateFit,
    action_functional,
    estimate_exit_probability,
    fit_rate,
    tracking_drift,
)
from .lqr import (
    LqrWeights,
    LtvSystem,
    TrackingPolicy,
    design_tracking_policy,
    feedback_control,
    linearize_along,
    riccati_backward,
)
from .planner import (
    CostSpec,
    PlannerReport,
    cost_gradient,
    goal_tracking_cost,
    nominal_cost,
    optimize_nominal,
)
from .simulate import (
    CLOSED_LOOP,
    OPEN_LOOP,
    Rollout,
    SweepResult,
    SweepRow,
    decay_rate_ratio,
    derive_seed,
    nmse,
    nmse_values,
    noise_scale,
    replay,
    rollout,
    sweep_epsilon,
)

__version__ = "0.1.0"
