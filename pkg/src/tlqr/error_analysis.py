"""First-order tracking-error and cost-error analysis around a nominal.

Under the feedback law u_t = u_nom_t - L_t (x_t - x_nom_t), the linearized
deviation dynamics are xdev_{t+1} = D_t xdev_t + w_t with D_t = A_t - B_t L_t.
Unrolling gives the deviations as explicit linear functions of the noise:

    xdev_{t+1} = sum_{s=0}^{t} Dprod(s+1, t) w_s
    udev_{t+1} = -L_{t+1} xdev_{t+1}

where Dprod(t1, t2) = D_{t2} ... D_{t1} (identity when t2 < t1). Plugging
these into the first-order cost expansion shows the cost deviation from the
nominal cost is itself linear in the noise vectors, with one coefficient
vector per (noise step, cost term); it therefore has exactly zero mean for
zero-mean noise, and it is Gaussian for Gaussian noise.

Since the run starts on the nominal (xdev_0 = 0), the index-0 entry of the
D sequence never enters any noise coefficient; the conventional value A_0 is
kept so the product table is fully populated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._stats import excess_kurtosis, skewness
from .dynamics import Array
from .lqr import LtvSystem, TrackingPolicy
from .planner import CostSpec


def closed_loop_matrices(sys: LtvSystem, gains: Array) -> Array:
    """Closed-loop matrices D_t = A_t - B_t L_t, with D_0 set to A_0.

    The t = 0 convention is immaterial for error propagation (the initial
    deviation is zero) but keeps the product table complete.
    """
    gains = np.asarray(gains, dtype=float)
    if gains.shape != (sys.horizon, sys.control_dim, sys.state_dim):
        raise ValueError(
            f"gains have shape {gains.shape}, expected "
            f"({sys.horizon}, {sys.control_dim}, {sys.state_dim})"
        )
    d = sys.a - np.einsum("tnm,tmk->tnk", sys.b, gains)
    d[0] = sys.a[0]
    return d


class TransitionProducts:
    """Cached ordered products of closed-loop matrices.

    ``product(t1, t2)`` returns D_{t2} @ ... @ D_{t1} for t2 >= t1 and the
    identity otherwise; ``noise_map(s, t)`` = product(s + 1, t) maps the
    noise injected at step s to the deviation at step t + 1.
    """

    def __init__(self, d: Array):
        d = np.asarray(d, dtype=float)
        if d.ndim != 3 or d.shape[1] != d.shape[2]:
            raise ValueError("d must be a (K, n, n) stack of square matrices")
        self.d = d
        k, n = d.shape[0], d.shape[1]
        self._eye = np.eye(n)
        self._rows: list[Array] = []
        for t1 in range(k):
            row = np.empty((k - t1, n, n))
            row[0] = d[t1]
            for t2 in range(t1 + 1, k):
                row[t2 - t1] = d[t2] @ row[t2 - t1 - 1]
            self._rows.append(row)

    @property
    def horizon(self) -> int:
        return self.d.shape[0]

    @property
    def dim(self) -> int:
        return self.d.shape[1]

    def product(self, t1: int, t2: int) -> Array:
        if t1 < 0 or t2 > self.horizon - 1:
            raise ValueError(f"product indices ({t1}, {t2}) outside the horizon")
        if t2 < t1:
            return self._eye
        return self._rows[t1][t2 - t1]

    def noise_map(self, s: int, t: int) -> Array:
        if not 0 <= s <= t <= self.horizon - 1:
            raise ValueError(f"noise_map indices ({s}, {t}) invalid")
        return self.product(s + 1, t)


def state_error_nonrecursive(products: TransitionProducts, noises: Array) -> Array:
    """Deviation at step t+1 as the direct sum over past noise injections.

    ``noises`` holds w_0 .. w_t; the result equals the recursive propagation
    xdev_{s+1} = D_s xdev_s + w_s started from zero.
    """
    noises = np.asarray(noises, dtype=float)
    if noises.ndim != 2 or noises.shape[1] != products.dim:
        raise ValueError(f"noises must be (t+1, {products.dim})")
    t = len(noises) - 1
    if t < 0 or t > products.horizon - 1:
        raise ValueError("noise sequence length outside the horizon")
    out = np.zeros(products.dim)
    for s in range(t + 1):
        out += products.noise_map(s, t) @ noises[s]
    return out


def control_error_nonrecursive(
    products: TransitionProducts, gains: Array, noises: Array
) -> Array:
    """Feedback-induced control deviation at step t+1: -sum_s L_{t+1} Dprod w_s."""
    noises = np.asarray(noises, dtype=float)
    gains = np.asarray(gains, dtype=float)
    t = len(noises) - 1
    if t + 1 > len(gains) - 1:
        raise ValueError("control deviation needs a gain at step t+1")
    out = np.zeros(gains.shape[1])
    for s in range(t + 1):
        out -= (gains[t + 1] @ products.noise_map(s, t)) @ noises[s]
    return out


@dataclass(frozen=True, eq=False)
class Deviations:
    """Deviation histories from a nominal: states (K+1, n), controls (K, m)."""

    states: Array
    controls: Array

    def __post_init__(self):
        if len(self.states) != len(self.controls) + 1:
            raise ValueError("expected K+1 state deviations for K control deviations")

    def magnitudes(self) -> Array:
        """Per-step combined magnitude |xdev_t| + |udev_t| for t < K."""
        return np.linalg.norm(self.states[:-1], axis=1) + np.linalg.norm(
            self.controls, axis=1
        )


def linear_deviations(
    products: TransitionProducts, gains: Array, noises: Array
) -> Deviations:
    """Full first-order deviation history from a complete noise sequence."""
    noises = np.asarray(noises, dtype=float)
    k = products.horizon
    if noises.shape != (k, products.dim):
        raise ValueError(f"noises must be ({k}, {products.dim})")
    states = np.zeros((k + 1, products.dim))
    controls = np.zeros((k, gains.shape[1]))
    for t in range(1, k + 1):
        states[t] = state_error_nonrecursive(products, noises[:t])
    for t in range(1, k):
        controls[t] = control_error_nonrecursive(products, gains, noises[:t])
    return Deviations(states=states, controls=controls)


@dataclass(frozen=True, eq=False)
class CostLinearization:
    """Cost gradients along a nominal trajectory, one row per stage."""

    cx: Array
    cu: Array
    cx_terminal: Array
    nominal_cost: float

    @property
    def horizon(self) -> int:
        return len(self.cx)


def linearize_cost(cost_spec: CostSpec, nominal) -> CostLinearization:
    """Stage and terminal cost gradients evaluated at the nominal points."""
    k = nominal.horizon
    cx = np.empty((k, nominal.state_dim))
    cu = np.empty((k, nominal.control_dim))
    total = 0.0
    for t in range(k):
        x, u = nominal.states[t], nominal.controls[t]
        cx[t] = cost_spec.stage_grad_x(t, x, u)
        cu[t] = cost_spec.stage_grad_u(t, x, u)
        total += cost_spec.stage(t, x, u)
    total += cost_spec.terminal(nominal.states[k])
    return CostLinearization(
        cx=cx,
        cu=cu,
        cx_terminal=np.asarray(cost_spec.terminal_grad(nominal.states[k]), dtype=float),
        nominal_cost=float(total),
    )


def first_order_cost_error(lin: CostLinearization, deviations: Deviations) -> float:
    """Linear part of the cost deviation: sum_t (cx_t xdev_t + cu_t udev_t) + terminal."""
    k = lin.horizon
    if len(deviations.controls) != k:
        raise ValueError("deviation horizon does not match the cost linearization")
    total = float(np.einsum("tn,tn->", lin.cx, deviations.states[:k]))
    total += float(np.einsum("tm,tm->", lin.cu, deviations.controls))
    total += float(lin.cx_terminal @ deviations.states[k])
    return total


class CostErrorCoefficients:
    """Per-noise coefficient vectors of the first-order cost error.

    ``table[(s, t)]`` is the vector multiplying noise w_s inside the cost
    term at step t (t = K denotes the terminal term). The decomposition
    certifies that the cost error is degree one in the noise variables, so
    its expectation vanishes identically under zero-mean noise.
    """

    def __init__(self, table: dict[tuple[int, int], Array], horizon: int, dim: int):
        self.table = table
        self.horizon = horizon
        self.dim = dim

    def evaluate(self, noises: Array) -> float:
        """Reconstruct the cost error for one noise sequence."""
        noises = np.asarray(noises, dtype=float)
        if noises.shape != (self.horizon, self.dim):
            raise ValueError(f"noises must be ({self.horizon}, {self.dim})")
        return float(sum(w @ noises[s] for (s, t), w in self.table.items()))

    def per_noise_totals(self) -> Array:
        """Aggregate coefficient of each noise vector: v_s = sum_t w_{s,t}."""
        totals = np.zeros((self.horizon, self.dim))
        for (s, _t), w in self.table.items():
            totals[s] += w
        return totals

    def variance(self, sigma: float) -> float:
        """Exact variance of the cost error for i.i.d. N(0, sigma^2 I) noise."""
        totals = self.per_noise_totals()
        return float(sigma**2 * np.sum(totals * totals))


def cost_error_coefficients(
    lin: CostLinearization, products: TransitionProducts, gains: Array
) -> CostErrorCoefficients:
    """Coefficient vectors w_{s,t} of the first-order cost error.

    For stage terms (t <= K-1): w_{s,t} = (cx_t M - cu_t L_t M)^T with
    M = noise_map(s, t-1); the terminal term uses the terminal gradient.
    """
    k = lin.horizon
    if products.horizon != k:
        raise ValueError("product table horizon does not match the cost linearization")
    gains = np.asarray(gains, dtype=float)
    table: dict[tuple[int, int], Array] = {}
    for t in range(1, k):
        for s in range(t):
            m = products.noise_map(s, t - 1)
            table[(s, t)] = lin.cx[t] @ m - lin.cu[t] @ (gains[t] @ m)
    for s in range(k):
        table[(s, k)] = lin.cx_terminal @ products.noise_map(s, k - 1)
    return CostErrorCoefficients(table=table, horizon=k, dim=products.dim)


@dataclass(frozen=True)
class CostErrorStats:
    """Monte Carlo moments of the first-order cost error."""

    n: int
    mean: float
    sd: float
    z: float
    skewness: float
    kurtosis: float
    epsilon: float

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "sd": self.sd,
            "z": self.z,
            "skewness": self.skewness,
            "kurtosis": self.kurtosis,
            "epsilon": self.epsilon,
        }


def cost_error_statistics(
    policy: TrackingPolicy,
    cost_spec: CostSpec,
    epsilon: float,
    n_samples: int,
    seed: int,
) -> CostErrorStats:
    """Sample the first-order cost error under isotropic Gaussian noise.

    The per-component noise standard deviation is epsilon times the largest
    nominal control norm. Each sample evaluates the exact linear-in-noise
    form of the cost error, so the population mean is identically zero; the
    reported z-score and moment statistics quantify the sampling evidence.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    lin = linearize_cost(cost_spec, policy.nominal)
    products = TransitionProducts(policy.closed_loop)
    coeffs = cost_error_coefficients(lin, products, policy.gains)
    base_sigma = float(np.linalg.norm(policy.nominal.controls, axis=1).max())
    sigma = epsilon * base_sigma

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if sigma == 0.0:
        samples = np.zeros(n_samples)
    else:
        noises = sigma * rng.standard_normal((n_samples, policy.horizon * products.dim))
        samples = noises @ coeffs.per_noise_totals().ravel()

    mean = float(samples.mean())
    sd = float(samples.std(ddof=1)) if n_samples > 1 else 0.0
    z = 0.0 if sd == 0.0 else mean / (sd / np.sqrt(n_samples))
    return CostErrorStats(
        n=n_samples,
        mean=mean,
        sd=sd,
        z=float(z),
        skewness=skewness(samples),
        kurtosis=excess_kurtosis(samples),
        epsilon=epsilon,
    )
