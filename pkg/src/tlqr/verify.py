"""Property-verification suites with explicit tolerances.

Each suite runs a set of named checks and reports the measured value next
to its bound, so a report is reviewable without rerunning. Suites:

* ``propagation``: non-recursive error propagation against the recursive
  linear simulation, the feedback identity udev = -L xdev, and the
  coefficient-form reconstruction of the first-order cost error, on random
  LTV instances.
* ``costerror``: zero-mean / Gaussianity statistics of the first-order cost
  error on the configured car policy.
* ``riccati``: the scalar hand fixture and the LQR value identity.
* ``ldp``: exit-rate regression signature plus exact synthetic recovery and
  the zero action of the nominal path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Array
from .error_analysis import (
    CostLinearization,
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
from .experiments import PlannedExperiment, plan_experiment, run_exit_study
from .large_deviations import ExitEstimate, PathSample, action_functional, fit_rate, tracking_drift
from .lqr import LqrWeights, LtvSystem, riccati_backward
from .simulate import derive_seed

SUITE_NAMES = ("propagation", "costerror", "riccati", "ldp")


@dataclass(frozen=True)
class Check:
    """One measured quantity against its bound."""

    name: str
    value: float
    bound: float
    op: str  # one of "<=", ">=", "<", ">"

    @property
    def passed(self) -> bool:
        if self.op == "<=":
            return self.value <= self.bound
        if self.op == ">=":
            return self.value >= self.bound
        if self.op == "<":
            return self.value < self.bound
        if self.op == ">":
            return self.value > self.bound
        raise ValueError(f"unknown comparator '{self.op}'")

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "bound": self.bound,
            "op": self.op,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    checks: tuple[Check, ...]
    details: dict | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        out = {
            "suite": self.suite,
            "passed": self.passed,
            "checks": [c.as_dict() for c in self.checks],
        }
        if self.details is not None:
            out["details"] = self.details
        return out


def random_ltv_instance(
    rng: np.random.Generator, max_nx: int = 4, max_nu: int = 2, max_k: int = 20
) -> tuple[LtvSystem, LqrWeights]:
    """Random LTV system (entries uniform in [-1, 1]) with identity weights."""
    n_x = int(rng.integers(1, max_nx + 1))
    n_u = int(rng.integers(1, max_nu + 1))
    k = int(rng.integers(2, max_k + 1))
    a = rng.uniform(-1.0, 1.0, size=(k, n_x, n_x))
    b = rng.uniform(-1.0, 1.0, size=(k, n_x, n_u))
    weights = LqrWeights.constant(np.ones(n_x), np.ones(n_u), k)
    return LtvSystem(a=a, b=b), weights


def _recursive_state_errors(d: Array, noises: Array) -> Array:
    """Oracle: xdev_{t+1} = D_t xdev_t + w_t started from zero."""
    k, n = noises.shape
    xdev = np.zeros((k + 1, n))
    for t in range(k):
        xdev[t + 1] = d[t] @ xdev[t] + noises[t]
    return xdev


def propagation_errors(n_instances: int = 1000, seed: int = 1001) -> dict:
    """Worst-case discrepancies over random LTV instances.

    Returns max relative error of the non-recursive state deviation against
    the recursive oracle, max entrywise error of udev + L xdev, and max
    relative error of the coefficient-form cost-error reconstruction.
    """
    rng = np.random.default_rng(seed)
    max_state_rel = 0.0
    max_identity_abs = 0.0
    max_reconstruction_rel = 0.0
    for _ in range(n_instances):
        sys, weights = random_ltv_instance(rng)
        gains, _ = riccati_backward(sys, weights)
        d = closed_loop_matrices(sys, gains)
        products = TransitionProducts(d)
        k, n_x = sys.horizon, sys.state_dim
        noises = rng.uniform(-1.0, 1.0, size=(k, n_x))
        oracle = _recursive_state_errors(d, noises)
        for t in range(1, k + 1):
            direct = state_error_nonrecursive(products, noises[:t])
            denom = max(float(np.linalg.norm(oracle[t])), 1e-12)
            max_state_rel = max(max_state_rel, float(np.linalg.norm(direct - oracle[t])) / denom)
        for t in range(1, k):
            udev = control_error_nonrecursive(products, gains, noises[:t])
            resid = udev + gains[t] @ state_error_nonrecursive(products, noises[:t])
            max_identity_abs = max(max_identity_abs, float(np.abs(resid).max()))
        lin = CostLinearization(
            cx=rng.uniform(-1.0, 1.0, size=(k, n_x)),
            cu=rng.uniform(-1.0, 1.0, size=(k, sys.control_dim)),
            cx_terminal=rng.uniform(-1.0, 1.0, size=n_x),
            nominal_cost=0.0,
        )
        coeffs = cost_error_coefficients(lin, products, gains)
        direct_value = first_order_cost_error(lin, linear_deviations(products, gains, noises))
        rebuilt = coeffs.evaluate(noises)
        denom = max(abs(direct_value), 1e-12)
        max_reconstruction_rel = max(max_reconstruction_rel, abs(rebuilt - direct_value) / denom)
    return {
        "max_state_rel": max_state_rel,
        "max_identity_abs": max_identity_abs,
        "max_reconstruction_rel": max_reconstruction_rel,
    }


def propagation_suite(n_instances: int = 1000, seed: int = 1001) -> SuiteReport:
    errors = propagation_errors(n_instances, seed)
    checks = (
        Check("state_error_vs_recursive_rel", errors["max_state_rel"], 1e-9, "<="),
        Check("control_feedback_identity_abs", errors["max_identity_abs"], 1e-12, "<="),
        Check("coefficient_reconstruction_rel", errors["max_reconstruction_rel"], 1e-9, "<="),
    )
    return SuiteReport(suite="propagation", checks=checks)


def riccati_fixture_errors() -> tuple[float, float]:
    """Scalar A=B=Wx=Wu=1, K=2; exact values P=(1.6, 1.5, 1), L=(0.6, 0.5)."""
    sys = LtvSystem(a=np.ones((2, 1, 1)), b=np.ones((2, 1, 1)))
    weights = LqrWeights.constant([1.0], [1.0], 2)
    gains, riccati = riccati_backward(sys, weights)
    p_err = float(np.abs(riccati.ravel() - np.array([1.6, 1.5, 1.0])).max())
    l_err = float(np.abs(gains.ravel() - np.array([0.6, 0.5])).max())
    return p_err, l_err


def simulated_quadratic_cost(
    sys: LtvSystem, weights: LqrWeights, gains: Array, x0: Array
) -> float:
    """Accumulated tracking cost of the noise-free LTV error dynamics."""
    x = np.asarray(x0, dtype=float)
    total = 0.0
    for t in range(sys.horizon):
        u = -gains[t] @ x
        total += float(x @ weights.wx[t] @ x + u @ weights.wu[t] @ u)
        x = sys.a[t] @ x + sys.b[t] @ u
    total += float(x @ weights.wx[sys.horizon] @ x)
    return total


def value_identity_error(n_instances: int = 100, seed: int = 1002) -> float:
    """Max relative gap between x0' P_0 x0 and the simulated quadratic cost."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        sys, weights = random_ltv_instance(rng)
        gains, riccati = riccati_backward(sys, weights)
        x0 = rng.uniform(-1.0, 1.0, size=sys.state_dim)
        predicted = float(x0 @ riccati[0] @ x0)
        simulated = simulated_quadratic_cost(sys, weights, gains, x0)
        worst = max(worst, abs(predicted - simulated) / max(abs(simulated), 1e-12))
    return worst


def riccati_suite(n_instances: int = 100, seed: int = 1002) -> SuiteReport:
    p_err, l_err = riccati_fixture_errors()
    checks = (
        Check("scalar_fixture_p_abs", p_err, 1e-12, "<="),
        Check("scalar_fixture_gain_abs", l_err, 1e-12, "<="),
        Check("value_identity_rel", value_identity_error(n_instances, seed), 1e-8, "<="),
    )
    return SuiteReport(suite="riccati", checks=checks)


def cost_error_suite(
    planned: PlannedExperiment, epsilon: float = 0.05, n_samples: int = 100_000
) -> SuiteReport:
    policy, cost_spec = planned.policy, planned.cost_spec
    lin = linearize_cost(cost_spec, policy.nominal)
    products = TransitionProducts(policy.closed_loop)
    coeffs = cost_error_coefficients(lin, products, policy.gains)

    # Direct evaluation through the deviation histories vs the coefficient form.
    rng = np.random.default_rng(derive_seed(planned.config.master_seed, 5))
    sigma = epsilon * float(np.linalg.norm(policy.nominal.controls, axis=1).max())
    max_rel = 0.0
    for _ in range(100):
        noises = sigma * rng.standard_normal((policy.horizon, products.dim))
        direct = first_order_cost_error(lin, linear_deviations(products, policy.gains, noises))
        rebuilt = coeffs.evaluate(noises)
        max_rel = max(max_rel, abs(rebuilt - direct) / max(abs(direct), 1e-12))

    stats = cost_error_statistics(
        policy, cost_spec, epsilon, n_samples, derive_seed(planned.config.master_seed, 4)
    )
    var_ratio_err = abs(stats.sd**2 / coeffs.variance(sigma) - 1.0)
    checks = (
        Check("coefficient_reconstruction_rel", max_rel, 1e-9, "<="),
        Check("mean_z_score_abs", abs(stats.z), 4.0, "<="),
        Check("skewness_abs", abs(stats.skewness), 0.1, "<="),
        Check("excess_kurtosis_abs", abs(stats.kurtosis), 0.2, "<="),
        Check("variance_vs_closed_form_rel", var_ratio_err, 0.05, "<="),
    )
    return SuiteReport(suite="costerror", checks=checks, details=stats.as_dict())


def synthetic_rate_recovery(a: float = 0.02) -> tuple[float, float]:
    """Fit error on exact p(eps) = exp(-a / eps^2) data."""
    estimates = [
        ExitEstimate(
            delta=1.0,
            epsilon=eps,
            n_runs=1,
            n_exits=0,
            p_hat=float(np.exp(-a / eps**2)),
            wilson_low=0.0,
            wilson_high=1.0,
        )
        for eps in (0.05, 0.1, 0.15)
    ]
    fit = fit_rate(estimates)
    return abs(fit.slope + a), abs(fit.r_squared - 1.0)


def ldp_suite(planned: PlannedExperiment) -> SuiteReport:
    slope_err, r2_err = synthetic_rate_recovery()
    drift = tracking_drift(planned.model, planned.policy)
    nominal_action = action_functional(
        drift, PathSample(path=planned.policy.nominal.states, dt=drift.dt), epsilon=0.1
    )
    estimates, fit = run_exit_study(planned)
    p_hats = [e.p_hat for e in estimates]
    checks = (
        Check("synthetic_slope_recovery_abs", slope_err, 1e-10, "<="),
        Check("synthetic_r2_recovery_abs", r2_err, 1e-10, "<="),
        Check("nominal_path_action", nominal_action, 0.0, "<="),
        Check("exit_p_hat_min", min(p_hats), 0.01, ">="),
        Check("exit_p_hat_max", max(p_hats), 0.9, "<="),
        Check("rate_fit_slope", fit.slope if fit else 0.0, 0.0, "<"),
        Check("rate_fit_r_squared", fit.r_squared if fit else 0.0, 0.8, ">="),
    )
    return SuiteReport(suite="ldp", checks=checks)


def run_suites(config, which: str) -> list[SuiteReport]:
    """Run one named suite or all of them for a given configuration."""
    if which != "all" and which not in SUITE_NAMES:
        raise ValueError(f"unknown suite '{which}' (choose from {SUITE_NAMES + ('all',)})")
    names = SUITE_NAMES if which == "all" else (which,)
    planned = None
    if {"costerror", "ldp"} & set(names):
        planned = plan_experiment(config)
    reports = []
    for name in names:
        if name == "propagation":
            reports.append(propagation_suite())
        elif name == "riccati":
            reports.append(riccati_suite())
        elif name == "costerror":
            reports.append(cost_error_suite(planned))
        elif name == "ldp":
            reports.append(ldp_suite(planned))
    return reports
