"""Monte-Carlo and closed-form estimators for the chain's core observables.

Implemented observables:

* rejection probability at a state, which equals the total-variation
  distance between the adjusted kernel and its proposal,
  ||T_x − Q_x||_TV = 1 − ∫ Q(x, y) A(x, y) dy;
* mean acceptance over exact stationary draws, optionally restricted to the
  typical-set event ||x||_inf < 4·sqrt(ln(8d));
* the Gaussian-target closed-form bound on the acceptance integrand
  ∫ Q(x, y) A(x, y) dy, which drives the conductance collapse;
* a Dirichlet-form upper estimate of the spectral gap using the first
  coordinate as test function;
* a generic one-sample TV estimator TV(P, Q) = E_P[(1 − q/p)_+];
* the projection inequality check E||T_x − Q_x||_TV <= 2·E||Qbar_x − Q_x||_TV
  for the Gaussian target, with Qbar the exact OU kernel;
* a per-coordinate empirical-CDF ("sliced") TV proxy and a mixing-time
  measurement built on it.

Every estimator returns a standard error so statistical claims can be
asserted with a 3-SE margin; estimators derive their own RNG substreams
from the given seed and reduce results in a fixed order, so they are
deterministic and safe to parallelize externally.

The sliced-TV proxy lower-bounds the full total variation in R^d, so
measured mixing times are lower bounds on the true TV mixing time; mean
acceptance restricted to the typical-set event estimates an average over
finitely many sampled states, never a supremum over the event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels, oracle1d
from .potentials import Potential, UnsupportedTargetError
from .rng import substream


@dataclass(frozen=True)
class EstimateWithSE:
    """Point estimate with its standard error and sample count."""

    value: float
    std_error: float
    n_samples: int

    def __post_init__(self):
        if self.std_error < 0 or self.n_samples < 1:
            raise ValueError("std_error must be >= 0 and n_samples >= 1")


def _mean_se(values: np.ndarray) -> EstimateWithSE:
    values = np.asarray(values, dtype=float)
    n = values.size
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return EstimateWithSE(value=float(values.mean()), std_error=se, n_samples=n)


@dataclass(frozen=True)
class TypicalSetFilter:
    """Restriction to the high-probability event ||x||_inf < sup_bound."""

    sup_bound: float
    enabled: bool = True

    def __post_init__(self):
        if self.sup_bound <= 0:
            raise ValueError("sup_bound must be positive")

    @classmethod
    def for_dimension(cls, d: int, enabled: bool = True) -> "TypicalSetFilter":
        """Default bound 4·sqrt(ln(8d)), which holds with probability >= 1 − 1/(4d)."""
        return cls(sup_bound=4.0 * math.sqrt(math.log(8.0 * d)), enabled=enabled)

    def mask(self, X: np.ndarray) -> np.ndarray:
        if not self.enabled:
            return np.ones(len(X), dtype=bool)
        return np.max(np.abs(X), axis=1) < self.sup_bound


def _acceptance_values(p: Potential, h: float, x, n_mc: int, rng) -> np.ndarray:
    """min(1, a(x, y)) for n_mc proposals y ~ Q_x, chunked to bound memory."""
    x = np.asarray(x, dtype=float)
    chunk = max(1, int(2**22 // max(x.shape[-1], 1)))
    out = np.empty(n_mc)
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        y = kernels.propose_mala(p, h, np.broadcast_to(x, (m, x.shape[-1])), rng)
        log_ratios = kernels.log_accept_ratio(p, h, x, y)
        out[done : done + m] = np.exp(np.minimum(log_ratios, 0.0))
        done += m
    return out


def acceptance_at(p: Potential, h: float, x, n_mc: int, seed) -> EstimateWithSE:
    """Monte-Carlo estimate of A(x) = E_{y~Q_x} min(1, a(x, y))."""
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    rng = substream(seed, "acceptance-at")
    return _mean_se(_acceptance_values(p, h, x, n_mc, rng))


def rejection_probability(p: Potential, h: float, x, n_mc: int, seed) -> EstimateWithSE:
    """Estimate of ||T_x − Q_x||_TV = 1 − A(x).

    Shares its draws with :func:`acceptance_at` (same seed, same stream), so
    the two estimates sum to 1 exactly per sample batch.
    """
    if n_mc < 100:
        raise ValueError("n_mc must be >= 100")
    acc = acceptance_at(p, h, x, n_mc, seed)
    return EstimateWithSE(
        value=1.0 - acc.value, std_error=acc.std_error, n_samples=acc.n_samples
    )


@dataclass(frozen=True)
class AcceptanceEstimate:
    """Mean acceptance over stationary states, with filter bookkeeping."""

    estimate: EstimateWithSE
    n_states: int
    n_mc: int
    filter_rejected_fraction: float


def mean_acceptance(
    p: Potential,
    h: float,
    n_states: int,
    n_mc: int,
    filt: TypicalSetFilter | None = None,
    seed=0,
) -> AcceptanceEstimate:
    """Double Monte-Carlo estimate of E_{x~pi} A(x) over exact stationary draws.

    Draws ``n_states`` exact samples from the separable target, optionally
    drops those outside the typical-set event (the dropped fraction is
    reported), and estimates A(x) per surviving state with ``n_mc``
    proposals. The standard error is the between-state SE of the per-state
    means, which accounts for both sampling layers.
    """
    if not p.separable:
        raise UnsupportedTargetError("mean_acceptance requires a separable target")
    if n_states < 2 or n_mc < 1:
        raise ValueError("need n_states >= 2 and n_mc >= 1")
    if filt is None:
        filt = TypicalSetFilter.for_dimension(p.d)
    X = kernels.sample_separable_target(p, n_states, substream(seed, "states"))
    keep = filt.mask(X)
    rejected_fraction = 1.0 - float(keep.mean())
    X = X[keep]
    if len(X) < 2:
        raise ValueError("typical-set filter removed almost every state")
    per_state = np.empty(len(X))
    for i, x in enumerate(X):
        rng = substream(seed, "proposals", i)
        per_state[i] = _acceptance_values(p, h, x, n_mc, rng).mean()
    return AcceptanceEstimate(
        estimate=_mean_se(per_state),
        n_states=len(X),
        n_mc=n_mc,
        filter_rejected_fraction=rejected_fraction,
    )


def gaussian_conductance_bound(x_norm2: float, h: float, d: int) -> float:
    """Closed-form bound on ∫ Q(x, y) A(x, y) dy for the standard Gaussian target.

    Equals exp[ h²(1 − h/4)/(4(1 + h²/2)) · ||x||² − (d/2)·ln(1 + h²/2) ];
    with ||x||² <= d and h = d^{−r} for r < 1/3 this is exp(−h³d/16·(1+O(h)))
    and certifies the conductance collapse at too-large step sizes.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    if x_norm2 < 0:
        raise ValueError("x_norm2 must be nonnegative")
    exponent = (
        h * h * (1.0 - h / 4.0) / (4.0 * (1.0 + h * h / 2.0)) * x_norm2
        - 0.5 * d * math.log1p(h * h / 2.0)
    )
    return math.exp(exponent)


def dirichlet_gap_upper(p: Potential, h: float, n: int, seed) -> EstimateWithSE:
    """Upper estimate of the spectral gap from the Dirichlet form of f(x) = x_1.

    Over exact stationary states x and realized MALA transitions y ~ T(x, ·),
    estimates (E[(x_1 − y_1)²]/2) / Var(x_1); reversibility turns the
    squared-increment form into the Dirichlet form, and restricting to a
    single test function upper-bounds the infimum defining the gap.
    """
    if not p.separable:
        raise UnsupportedTargetError("dirichlet_gap_upper requires a separable target")
    if n < 2:
        raise ValueError("n must be >= 2")
    X = kernels.sample_separable_target(p, n, substream(seed, "gap-states"))
    X_new, _, _ = kernels.batch_mala_update(p, h, X, substream(seed, "gap-proposals"))
    increments = 0.5 * (X[:, 0] - X_new[:, 0]) ** 2
    x1 = X[:, 0]
    var_x1 = float(x1.var(ddof=1))
    num = _mean_se(increments)
    if num.value == 0.0:
        return EstimateWithSE(value=0.0, std_error=0.0, n_samples=n)
    centered_sq = (x1 - x1.mean()) ** 2
    se_var = float(centered_sq.std(ddof=1) / math.sqrt(n))
    value = num.value / var_x1
    rel = math.sqrt((num.std_error / num.value) ** 2 + (se_var / var_x1) ** 2)
    return EstimateWithSE(value=value, std_error=value * rel, n_samples=n)


def tv_mc_estimate(
    log_p: Callable, log_q: Callable, sampler_p: Callable, n: int, seed
) -> EstimateWithSE:
    """One-sample TV estimator TV(P, Q) = E_P[(1 − q(X)/p(X))_+].

    ``sampler_p(n, rng)`` must return draws from P; ``log_p`` and ``log_q``
    evaluate unnormalized-free log densities on those draws (they must share
    support P-almost surely). Values are clipped to [0, 1] pointwise.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = substream(seed, "tv-mc")
    X = sampler_p(n, rng)
    lp = np.asarray(log_p(X), dtype=float)
    lq = np.asarray(log_q(X), dtype=float)
    if not np.all(np.isfinite(lp)) or np.any(np.isnan(lq)) or np.any(lq == np.inf):
        raise FloatingPointError("non-finite log densities in TV estimator")
    vals = np.clip(1.0 - np.exp(lq - lp), 0.0, 1.0)
    return _mean_se(vals)


def isotropic_gaussian_logpdf(X, mean, var: float):
    """Log density of N(mean, var·I) evaluated row-wise."""
    X = np.asarray(X, dtype=float)
    d = X.shape[-1]
    sq = np.sum((X - mean) ** 2, axis=-1)
    return -0.5 * (d * math.log(2.0 * math.pi * var) + sq / var)


@dataclass(frozen=True)
class ProjectionReport:
    """Both sides of the projection inequality with the decision threshold."""

    lhs: EstimateWithSE
    rhs: EstimateWithSE
    threshold: float
    n_states: int
    n_mc: int
    passed: bool


def projection_check_gaussian(
    h: float, d: int, n_states: int, n_mc: int, seed
) -> ProjectionReport:
    """Check E||T_x − Q_x||_TV <= 2·E||Qbar_x − Q_x||_TV for the Gaussian target.

    Qbar is the exact OU kernel N(e^{−h}x, (1 − e^{−2h})·I) and Q the MALA
    proposal N((1 − h)x, 2h·I); states are exact stationary draws. The left
    side is the mean rejection probability; the right side is estimated with
    the one-sample TV estimator under Qbar. The inequality is asserted with
    a 3-combined-SE margin. Requires h <= 1/3, the validity range of the
    discretization bound backing this comparison.
    """
    if not 0.0 < h <= 1.0 / 3.0:
        raise ValueError("projection check requires 0 < h <= 1/3")
    p_target = _gaussian_target(d)
    states = substream(seed, "projection-states").standard_normal((n_states, d))
    ou_var = -math.expm1(-2.0 * h)
    decay = math.exp(-h)
    lhs = np.empty(n_states)
    rhs = np.empty(n_states)
    for i, x in enumerate(states):
        lhs[i] = rejection_probability(
            p_target, h, x, n_mc, substream(seed, "projection-reject", i)
        ).value
        mean_q = (1.0 - h) * x
        mean_ou = decay * x

        def sampler(n, rng, mean_ou=mean_ou):
            return mean_ou + math.sqrt(ou_var) * rng.standard_normal((n, d))

        rhs[i] = tv_mc_estimate(
            lambda Y: isotropic_gaussian_logpdf(Y, mean_ou, ou_var),
            lambda Y: isotropic_gaussian_logpdf(Y, mean_q, 2.0 * h),
            sampler,
            n_mc,
            substream(seed, "projection-tv", i),
        ).value
    lhs_est, rhs_est = _mean_se(lhs), _mean_se(rhs)
    threshold = 2.0 * rhs_est.value + 3.0 * math.sqrt(
        lhs_est.std_error**2 + 4.0 * rhs_est.std_error**2
    )
    return ProjectionReport(
        lhs=lhs_est, rhs=rhs_est, threshold=threshold,
        n_states=n_states, n_mc=n_mc, passed=lhs_est.value <= threshold,
    )


def _gaussian_target(d: int) -> Potential:
    from .potentials import gaussian

    return gaussian(d)


def sliced_tv_to_target(samples, table: oracle1d.CDFTable) -> float:
    """Max over coordinates of the empirical-CDF sup distance to the marginal.

    A lower bound on the full d-dimensional TV distance to the product
    target; requires at least 1000 samples so the empirical CDF is
    meaningful.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or len(X) < 1000:
        raise ValueError("need a 2-D sample array with at least 1000 rows")
    n = len(X)
    Xs = np.sort(X, axis=0)
    F = np.asarray(table.cdf_at(Xs.ravel())).reshape(Xs.shape)
    i = np.arange(1, n + 1)[:, None] / n
    upper = np.max(i - F)
    lower = np.max(F - (i - 1.0 / n))
    return float(max(upper, lower, 0.0))


def mixing_time_measure(
    p: Potential,
    h: float,
    x0_sampler: Callable,
    eps: float,
    max_steps: int,
    n_replicas: int,
    seed,
    variant: str = kernels.MALA,
    check_every: int = 1,
) -> int:
    """First step at which the replica ensemble's sliced TV drops below eps.

    Runs ``n_replicas`` independent chains from ``x0_sampler(n, rng)`` in
    lockstep and evaluates the sliced-TV proxy against the exact marginal
    every ``check_every`` steps. Returns ``max_steps`` as a sentinel when the
    threshold is never reached. Because the proxy lower-bounds the full TV,
    the returned count is a lower bound on the TV mixing time.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if variant not in (kernels.MALA, kernels.ULA):
        raise ValueError("mixing is measured for the mala and ula variants")
    table = kernels.cdf_table_for(p)
    X = np.asarray(x0_sampler(n_replicas, substream(seed, "mix-init")), dtype=float)
    if sliced_tv_to_target(X, table) <= eps:
        return 0
    rng = substream(seed, "mix-steps")
    for step in range(1, max_steps + 1):
        if variant == kernels.MALA:
            X, _, _ = kernels.batch_mala_update(p, h, X, rng)
        else:
            X = kernels.batch_ula_update(p, h, X, rng)
        if step % check_every == 0 and sliced_tv_to_target(X, table) <= eps:
            return step
    return max_steps
