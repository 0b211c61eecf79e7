"""Oracle and exact-testbed verification suite behind ``malalab verify``.

Each check produces a :class:`CheckResult` row (name, measured value, bound,
slack, passed); the suite passes iff every slack is nonnegative. Checks fall
into three groups:

* closed forms against independent quadrature and rate bounds for the 1-D
  oracle layer;
* kernel identities (Gaussian closed-form acceptance, antisymmetry, direct
  density-ratio oracle) plus quick distributional sanity checks;
* the exact finite-chain suite (metropolization, projection inequalities,
  Cheeger sandwich, warmness and mixing bounds) on seeded random instances.

Exact identities are gated at tight absolute tolerances. Distributional
z-score checks are gated at 4 standard errors rather than 3 so that the
suite exits 0 across arbitrary seeds (the statistical acceptance criteria
proper live in the test suite with their specified 3-SE margins and pinned
seeds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import diagnostics, finite_chain, kernels, oracle1d
from .potentials import adversarial_cosine, gaussian
from .rng import substream

Z_GATE = 4.0


@dataclass(frozen=True)
class CheckResult:
    """One verification row; passes iff slack >= 0."""

    name: str
    value: float
    bound: float
    slack: float
    passed: bool


def _leq(name: str, value: float, bound: float) -> CheckResult:
    slack = bound - value
    return CheckResult(name=name, value=float(value), bound=float(bound),
                       slack=float(slack), passed=slack >= 0.0)


def _geq(name: str, value: float, bound: float) -> CheckResult:
    slack = value - bound
    return CheckResult(name=name, value=float(value), bound=float(bound),
                       slack=float(slack), passed=slack >= 0.0)


# ---------------------------------------------------------------------------
# oracle layer


def oracle_checks(seed: int) -> list[CheckResult]:
    rows: list[CheckResult] = []
    gauss = oracle1d.gaussian_profile()

    rows.append(_leq(
        "oracle_quad_normalization_gaussian",
        abs(oracle1d.quad_expectation(gauss, lambda x: 1.0) - 1.0), 1e-10,
    ))
    rows.append(_leq(
        "oracle_quad_second_moment_gaussian",
        abs(oracle1d.quad_expectation(gauss, lambda x: x * x) - 1.0), 1e-10,
    ))
    rows.append(_leq(
        "oracle_quad_cos_characteristic",
        abs(oracle1d.quad_expectation(gauss, lambda x: math.cos(2.0 * x))
            - math.exp(-2.0)),
        1e-9,
    ))
    rows.append(_leq(
        "oracle_norm_const_gaussian",
        abs(oracle1d.normalizing_constant(gauss) - oracle1d.SQRT_2PI), 1e-10,
    ))
    rows.append(_geq(
        "oracle_norm_const_adversarial_exceeds_gaussian",
        oracle1d.normalizing_constant(oracle1d.adversarial_profile(256, 0.2))
        - oracle1d.SQRT_2PI,
        0.0,
    ))

    # Closed-form trig moments against quadrature over the Gaussian profile.
    worst = 0.0
    params = [(a, b, g, d)
              for a, b in ((0.3, 0.5), (1.1, 0.8))
              for g, d in ((0.2, 64), (0.25, 256))]
    for ell in range(5):
        for a, b, g, d in params:
            w = b * d**g
            closed = oracle1d.trig_sin_moment(ell, a, b, g, d)
            quad = oracle1d.quad_expectation(
                gauss, lambda x, ell=ell, a=a, w=w: x**ell * math.sin(a + w * x)
            )
            worst = max(worst, abs(closed - quad))
    rows.append(_leq("oracle_trig_moment_vs_quadrature", worst, 1e-8))

    # Decay once the phase coefficient is large: fit C on the smallest d,
    # require |moment| <= C/d for all larger d.
    ell, a, b, g = 2, 0.4, 1.0, 0.3
    ds = [2**k for k in range(8, 15, 2)]
    ds = [d for d in ds if b * d**g >= 5.0]
    c_fit = abs(oracle1d.trig_sin_moment(ell, a, b, g, ds[0])) * ds[0]
    worst = max(
        abs(oracle1d.trig_sin_moment(ell, a, b, g, d)) - c_fit / d for d in ds[1:]
    )
    rows.append(_leq("oracle_trig_moment_decay", worst, 0.0))

    # Rates for the perturbed marginal at eta = 0.2.
    eta = 0.2
    worst_z, worst_m2, worst_kl, min_kl = 0.0, 0.0, 0.0, math.inf
    for k in range(8, 17, 2):
        d = 2**k
        prof = oracle1d.adversarial_profile(d, eta)
        rate = d ** (-4.0 * eta)
        z = oracle1d.normalizing_constant(prof)
        worst_z = max(worst_z, abs(z / oracle1d.SQRT_2PI - 1.0) / rate)
        m2 = oracle1d.quad_expectation(prof, lambda x: x * x)
        worst_m2 = max(worst_m2, abs(m2 - 1.0) / rate)
        kl = oracle1d.kl_gaussian_vs_adversarial(eta, d)
        worst_kl = max(worst_kl, kl / d ** (1.0 - 4.0 * eta))
        min_kl = min(min_kl, kl)
    rows.append(_leq("oracle_norm_const_rate", worst_z, 2.0))
    rows.append(_leq("oracle_second_moment_sandwich", worst_m2, 2.0))
    rows.append(_leq("oracle_kl_rate", worst_kl, 2.0))
    rows.append(_geq("oracle_kl_nonnegative", min_kl, -1e-8))

    d = 2**14
    ratio = oracle1d.expected_cos(oracle1d.adversarial_profile(d, eta), eta, d) / (
        0.25 * d ** (-2.0 * eta)
    )
    rows.append(_leq("oracle_expected_cos_ratio_high", ratio, 1.2))
    rows.append(_geq("oracle_expected_cos_ratio_low", ratio, 0.8))

    # Per-coordinate acceptance factor: quadrature vs an independent MC
    # oracle, and the amplitude-zero identity. (The calibrated slack cap
    # lives in the acceptance suite, where its margin is flagged.)
    d = 4096
    h = d**-0.4
    x1 = -2.0 * math.sqrt(math.log(8.0 * d))
    quad_val = oracle1d.coordinate_factor(x1, h, eta, d)
    amp = 0.5 * d ** (-2.0 * eta)
    w = d**eta
    rng_cf = substream(seed, "verify", "coordinate-factor")
    n_cf = 200_000
    y = ((1.0 - h) * x1 / (1.0 + h * h)
         + math.sqrt(2.0 * h / (1.0 + h * h)) * rng_cf.standard_normal(n_cf))
    sin_wy = np.sin(w * y)
    mc_vals = np.exp(
        amp * np.cos(w * y)
        + ((1.0 - h) * y - x1) * (0.5 * amp * w) * sin_wy
        - 0.25 * h * (amp * w * sin_wy) ** 2
    )
    z = abs(quad_val - float(mc_vals.mean())) / (
        float(mc_vals.std(ddof=1)) / math.sqrt(n_cf)
    )
    rows.append(_leq("oracle_coordinate_factor_mc_zscore", z, Z_GATE))
    rows.append(_leq(
        "oracle_coordinate_factor_amplitude_zero",
        abs(oracle1d.coordinate_factor(1.3, h, eta, d, amplitude=0.0) - 1.0), 0.0,
    ))

    rows.append(_leq(
        "oracle_gaussian_tv_closed_form",
        abs(oracle1d.gaussian_tv_equal_cov(2.0, 1.0)
            - (2.0 * 0.8413447460685429 - 1.0)),
        1e-12,
    ))

    table = oracle1d.inverse_cdf_table(oracle1d.adversarial_profile(256, eta))
    us = np.linspace(0.01, 0.99, 99)
    rows.append(_leq(
        "oracle_inverse_cdf_roundtrip",
        float(np.max(np.abs(table.cdf_at(table.inverse(us)) - us))), 1e-6,
    ))
    gauss_table = oracle1d.inverse_cdf_table(gauss)
    rows.append(_leq(
        "oracle_inverse_cdf_median", abs(gauss_table.inverse(0.5)), 1e-8,
    ))

    prof_coarse = oracle1d.adversarial_profile(1024, eta, tol=1e-8)
    prof_fine = oracle1d.adversarial_profile(1024, eta, tol=5e-9)
    rows.append(_leq(
        "oracle_quad_self_consistency",
        abs(oracle1d.quad_expectation(prof_coarse, lambda x: x * x)
            - oracle1d.quad_expectation(prof_fine, lambda x: x * x)),
        1e-8,
    ))
    return rows


# ---------------------------------------------------------------------------
# kernel identities


def _direct_density_log_ratio(p, h, x, y):
    """log a from explicit Gaussian proposal log densities (oracle path)."""
    fwd = diagnostics.isotropic_gaussian_logpdf(y, x - h * p.grad(x), 2.0 * h)
    bwd = diagnostics.isotropic_gaussian_logpdf(x, y - h * p.grad(y), 2.0 * h)
    return (-p.value(y) + bwd) - (-p.value(x) + fwd)


def kernel_checks(seed: int, ratio_fn: Callable | None = None) -> list[CheckResult]:
    rows: list[CheckResult] = []
    ratio = ratio_fn if ratio_fn is not None else kernels.log_accept_ratio

    d, h = 16, 0.3
    rng = substream(seed, "verify", "pairs")
    X = rng.standard_normal((10_000, d))
    Y = rng.standard_normal((10_000, d))
    p_gauss = gaussian(d)
    vals = np.array([ratio(p_gauss, h, x, y) for x, y in zip(X[:200], Y[:200])])
    closed = (h / 4.0) * (np.sum(X[:200] ** 2, axis=1) - np.sum(Y[:200] ** 2, axis=1))
    batched = ratio(p_gauss, h, X, Y)
    closed_all = (h / 4.0) * (np.sum(X**2, axis=1) - np.sum(Y**2, axis=1))
    rows.append(_leq(
        "log_accept_gaussian_closed_form",
        max(float(np.max(np.abs(vals - closed))),
            float(np.max(np.abs(batched - closed_all)))),
        1e-9,
    ))

    p_adv = adversarial_cosine(d, 0.2)
    worst = 0.0
    for p in (p_gauss, p_adv):
        fwd = np.asarray(ratio(p, h, X, Y))
        bwd = np.asarray(ratio(p, h, Y, X))
        worst = max(worst, float(np.max(np.abs(fwd + bwd))))
    rows.append(_leq("log_accept_antisymmetry", worst, 1e-13))

    d8 = 8
    p8 = adversarial_cosine(d8, 0.2)
    rng8 = substream(seed, "verify", "density-oracle")
    worst = 0.0
    for _ in range(200):
        x = rng8.standard_normal(d8)
        y = rng8.standard_normal(d8)
        worst = max(worst, abs(ratio(p8, 0.17, x, y)
                               - _direct_density_log_ratio(p8, 0.17, x, y)))
    rows.append(_leq("log_accept_density_oracle", worst, 1e-9))

    x = substream(seed, "verify", "complement").standard_normal(d8)
    rej = diagnostics.rejection_probability(p8, 0.4, x, 500, seed)
    acc = diagnostics.acceptance_at(p8, 0.4, x, 500, seed)
    rows.append(_leq("rejection_acceptance_complement",
                     abs(rej.value + acc.value - 1.0), 1e-15))

    params = kernels.KernelParams(h=1.2, variant=kernels.MALA)
    state = kernels.init_chain(p8, np.full(d8, 2.0), substream(seed, "verify", "atom"))
    mismatches = 0
    for _ in range(300):
        before = state.x.copy()
        state, rec = kernels.mala_step(p8, params, state)
        if not rec.accepted and not np.array_equal(state.x, before):
            mismatches += 1
    rows.append(_leq("mala_rejection_atom", float(mismatches), 0.0))

    # One-step stationarity on exact draws (z-gate at 4 SE).
    n = 20_000
    rng_s = substream(seed, "verify", "stationarity")
    Xs = rng_s.standard_normal((n, 8))
    p_g8 = gaussian(8)
    for _ in range(5):
        Xs, _, _ = kernels.batch_mala_update(p_g8, 0.3, Xs, rng_s)
    sq = Xs[:, 0] ** 2
    z = abs(float(sq.mean()) - 1.0) / (float(sq.std(ddof=1)) / math.sqrt(n))
    rows.append(_leq("mala_stationarity_zscore", z, Z_GATE))

    rng_ou = substream(seed, "verify", "ou")
    h_ou = 0.7
    y = kernels.ou_exact_step(h_ou, np.zeros((n, 1)), rng_ou)
    sq = y[:, 0] ** 2
    target = -math.expm1(-2.0 * h_ou)
    z = abs(float(sq.mean()) - target) / (float(sq.std(ddof=1)) / math.sqrt(n))
    rows.append(_leq("ou_exact_variance_zscore", z, Z_GATE))
    return rows


# ---------------------------------------------------------------------------
# finite-chain exact suite


def finite_chain_checks(seed: int) -> list[CheckResult]:
    rows: list[CheckResult] = []

    pi = np.array([2.0 / 3.0, 1.0 / 3.0])
    Q = np.full((2, 2), 0.5)
    chain = finite_chain.metropolize(Q, pi)
    expected_T = np.array([[0.75, 0.25], [0.5, 0.5]])
    rows.append(_leq("finite_two_state_kernel",
                     float(np.max(np.abs(chain.T - expected_T))), 1e-15))
    rows.append(_leq("finite_two_state_offdiag_l1",
                     abs(finite_chain.offdiag_l1(chain.T, Q, pi) - 1.0 / 6.0), 1e-15))
    spec = finite_chain.spectral_quantities(chain)
    rows.append(_leq("finite_two_state_spectral",
                     max(abs(spec.gap - 0.75), abs(spec.conductance - 0.5)), 1e-12))

    rng = substream(seed, "verify", "finite")
    worst_db = worst_stat = 0.0
    worst_cheeger = math.inf
    worst_smono = 0.0
    s_grid = np.linspace(0.01, 0.45, 9)
    for _ in range(200):
        n = int(rng.integers(3, 11))
        c = finite_chain.random_reversible_chain(n, rng)
        worst_db = max(worst_db, finite_chain.detailed_balance_error(c.T, c.pi))
        worst_stat = max(worst_stat, float(np.max(np.abs(c.pi @ c.T - c.pi))))
        sp = finite_chain.spectral_quantities(c)
        worst_cheeger = min(
            worst_cheeger,
            sp.gap - sp.conductance**2 / 8.0,
            2.0 * sp.conductance - sp.gap,
        )
        cs_vals = [sp.s_conductance(s) for s in s_grid]
        finite_vals = [v for v in cs_vals if math.isfinite(v)]
        if len(finite_vals) > 1:
            worst_smono = max(worst_smono,
                              max(a - b for a, b in zip(finite_vals, finite_vals[1:])))
    rows.append(_leq("finite_detailed_balance", worst_db, finite_chain.EXACT_TOL))
    rows.append(_leq("finite_stationarity", worst_stat, finite_chain.EXACT_TOL))
    rows.append(_geq("finite_cheeger_sandwich_slack", worst_cheeger, -1e-12))
    rows.append(_leq("finite_s_conductance_monotone", worst_smono, 1e-12))

    worst_global = worst_state = 0.0
    for _ in range(500):
        n = int(rng.integers(2, 9))
        pi_r, q_r, qbar_r = finite_chain.random_projection_triple(n, rng)
        rep = finite_chain.projection_check(q_r, qbar_r, pi_r)
        worst_global = max(worst_global, rep.global_lhs - rep.global_rhs)
        worst_state = max(worst_state, float(np.max(rep.state_lhs - rep.state_rhs)))
    rows.append(_leq("finite_projection_global", worst_global, finite_chain.EXACT_TOL))
    rows.append(_leq("finite_projection_pointwise", worst_state, finite_chain.EXACT_TOL))

    worst_warm = worst_chi2 = worst_lov = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 11))
        c = finite_chain.random_reversible_chain(n, rng)
        mu0 = np.zeros(n)
        mu0[int(np.argmin(c.pi))] = 1.0
        rep = finite_chain.evolve_and_check(c, mu0, 50)
        worst_warm = max(worst_warm, rep.max_warm_violation)
        worst_chi2 = max(worst_chi2, rep.max_chi2_violation)
        worst_lov = max(worst_lov, rep.max_lovasz_violation)
    rows.append(_leq("finite_warmness_monotone", worst_warm, finite_chain.EXACT_TOL))
    rows.append(_leq("finite_chi2_warmness", worst_chi2, finite_chain.EXACT_TOL))
    rows.append(_leq("finite_lovasz_bound", worst_lov, finite_chain.EXACT_TOL))
    return rows


def run_all_checks(seed: int, corrupt_accept: bool = False) -> list[CheckResult]:
    """Full verification suite; ``corrupt_accept`` is a test fixture that
    biases the acceptance-ratio path and must make the log_accept checks fail.
    """
    ratio_fn = None
    if corrupt_accept:
        def ratio_fn(p, h, x, y):
            return kernels.log_accept_ratio(p, h, x, y) + 0.05

    rows = oracle_checks(seed)
    rows.extend(kernel_checks(seed, ratio_fn=ratio_fn))
    rows.extend(finite_chain_checks(seed))
    return rows


def finite_selftest_rows(n_instances: int, seed: int):
    """Per-instance finite-chain report rows: (instance seed, check id, slack)."""
    rows = []
    all_ok = True
    for i in range(n_instances):
        inst_seed = seed + i
        rng = substream(inst_seed, "finite-selftest")
        n = int(rng.integers(3, 11))
        c = finite_chain.random_reversible_chain(n, rng)
        sp = finite_chain.spectral_quantities(c)
        pi_r, q_r, qbar_r = finite_chain.random_projection_triple(
            int(rng.integers(2, 9)), rng
        )
        proj = finite_chain.projection_check(q_r, qbar_r, pi_r)
        mu0 = np.zeros(n)
        mu0[int(np.argmin(c.pi))] = 1.0
        ev = finite_chain.evolve_and_check(c, mu0, 50)
        checks = [
            ("detailed_balance",
             finite_chain.EXACT_TOL - finite_chain.detailed_balance_error(c.T, c.pi)),
            ("stationarity",
             finite_chain.EXACT_TOL - float(np.max(np.abs(c.pi @ c.T - c.pi)))),
            ("cheeger_lower", sp.gap - sp.conductance**2 / 8.0 + 1e-12),
            ("cheeger_upper", 2.0 * sp.conductance - sp.gap + 1e-12),
            ("projection_global", proj.global_rhs - proj.global_lhs
             + finite_chain.EXACT_TOL),
            ("projection_pointwise",
             float(np.min(proj.state_rhs - proj.state_lhs)) + finite_chain.EXACT_TOL),
            ("warmness_monotone",
             finite_chain.EXACT_TOL - ev.max_warm_violation),
            ("chi2_warmness", finite_chain.EXACT_TOL - ev.max_chi2_violation),
            ("lovasz_bound", finite_chain.EXACT_TOL - ev.max_lovasz_violation),
        ]
        for check_id, slack in checks:
            rows.append((inst_seed, check_id, float(slack)))
            all_ok = all_ok and slack >= 0.0
    return rows, all_ok
