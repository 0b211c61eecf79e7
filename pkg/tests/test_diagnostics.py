import math

import numpy as np
import pytest
from scipy import integrate, stats

from malalab import diagnostics as dg
from malalab import finite_chain, kernels
from malalab.diagnostics import (
    TypicalSetFilter,
    acceptance_at,
    dirichlet_gap_upper,
    gaussian_conductance_bound,
    isotropic_gaussian_logpdf,
    mean_acceptance,
    mixing_time_measure,
    projection_check_gaussian,
    rejection_probability,
    sliced_tv_to_target,
    tv_mc_estimate,
)
from malalab.oracle1d import gaussian_tv_equal_cov
from malalab.potentials import UnsupportedTargetError, adversarial_cosine, gaussian
from malalab.rng import substream


def rejection_quadrature_1d(h, x):
    """1-D oracle: 1 − ∫ q(y|x)·min(1, a(x, y)) dy for the Gaussian target."""
    mean = (1 - h) * x

    def integrand(y):
        q = math.exp(-((y - mean) ** 2) / (4 * h)) / math.sqrt(4 * math.pi * h)
        a = math.exp((h / 4) * (x * x - y * y))
        return q * min(1.0, a)

    val, err = integrate.quad(integrand, mean - 40 * math.sqrt(h),
                              mean + 40 * math.sqrt(h), limit=400)
    assert err < 1e-7
    return 1.0 - val


class TestRejectionProbability:
    def test_tiny_step_rarely_rejects(self):
        est = rejection_probability(gaussian(4), 1e-10, np.ones(4), 1000, seed=1)
        assert est.value <= 0.01

    def test_matches_1d_quadrature(self):
        h, x = 0.2, 1.0
        est = rejection_probability(gaussian(1), h, np.array([x]), 40_000, seed=2)
        assert est.value == pytest.approx(
            rejection_quadrature_1d(h, x), abs=3 * est.std_error
        )

    def test_complement_identity_with_shared_draws(self):
        p, h = adversarial_cosine(8, 0.2), 0.5
        x = substream(3, "complement").standard_normal(8)
        rej = rejection_probability(p, h, x, 500, seed=4)
        acc = acceptance_at(p, h, x, 500, seed=4)
        assert rej.value + acc.value == 1.0
        assert rej.std_error == acc.std_error

    def test_lemma_style_rejection_ceiling(self):
        # Stationary Gaussian states at h = 0.5 d^{-1/3} keep rejection <= 1/6.
        d = 64
        h = 0.5 * d ** (-1.0 / 3.0)
        p = gaussian(d)
        X = kernels.sample_separable_target(p, 50, seed=5)
        vals = [rejection_probability(p, h, x, 400, seed=substream(6, "ceiling", i)).value
                for i, x in enumerate(X)]
        assert float(np.mean(vals)) <= 1.0 / 6.0

    def test_minimum_sample_size(self):
        with pytest.raises(ValueError):
            rejection_probability(gaussian(2), 0.1, np.zeros(2), 50, seed=7)


class TestMeanAcceptance:
    def test_small_step_near_one(self):
        res = mean_acceptance(gaussian(16), 1e-6, 32, 32, seed=8)
        assert res.estimate.value >= 0.999

    def test_gaussian_floor_single_dimension(self):
        d = 64
        res = mean_acceptance(gaussian(d), 0.5 * d ** (-1 / 3), 100, 100, seed=9)
        assert res.estimate.value - 3 * res.estimate.std_error >= 0.5

    def test_filter_reporting(self):
        p = gaussian(4)
        tight = TypicalSetFilter(sup_bound=1.0)
        res = mean_acceptance(p, 0.1, 400, 16, filt=tight, seed=10)
        assert 0.5 < res.filter_rejected_fraction < 1.0
        loose = mean_acceptance(p, 0.1, 400, 16, seed=10)
        assert loose.filter_rejected_fraction <= 0.01

    def test_requires_separable(self):
        import dataclasses

        p = dataclasses.replace(gaussian(3), separable=False)
        with pytest.raises(UnsupportedTargetError):
            mean_acceptance(p, 0.1, 8, 8, seed=11)

    def test_default_filter_dimension_rule(self):
        filt = TypicalSetFilter.for_dimension(4096)
        assert filt.sup_bound == pytest.approx(4 * math.sqrt(math.log(8 * 4096)))


class TestGaussianConductanceBound:
    def test_small_step_limit_is_one(self):
        assert gaussian_conductance_bound(256.0, 1e-9, 256) == pytest.approx(1.0)

    def test_log_value_decay_on_sphere(self):
        d = 256
        h = d**-0.2
        val = gaussian_conductance_bound(float(d), h, d)
        assert math.log(val) <= -(h**3) * d / 32.0

    def test_dominates_mc_acceptance_integrand(self):
        d = 256
        h = d**-0.2
        p = gaussian(d)
        X = kernels.sample_separable_target(p, 40, seed=12)
        X = X[np.linalg.norm(X, axis=1) <= math.sqrt(d)][:5]
        assert len(X) >= 3
        for i, x in enumerate(X):
            est = acceptance_at(p, h, x, 2000, seed=substream(13, "domination", i))
            bound = gaussian_conductance_bound(float(x @ x), h, d)
            assert est.value <= bound + 3 * est.std_error

    def test_input_validation(self):
        with pytest.raises(ValueError):
            gaussian_conductance_bound(1.0, 0.0, 4)
        with pytest.raises(ValueError):
            gaussian_conductance_bound(-1.0, 0.1, 4)


class TestDirichletGapUpper:
    def test_vanishes_with_step(self):
        est = dirichlet_gap_upper(gaussian(8), 1e-6, 20_000, seed=14)
        assert est.value <= 1e-5

    @pytest.mark.parametrize("p", [gaussian(64), adversarial_cosine(64, 0.2)])
    @pytest.mark.parametrize("h", [0.01, 0.3])
    def test_gap_ceiling_smoke(self, p, h):
        est = dirichlet_gap_upper(p, h, 20_000, seed=15)
        assert est.value - 3 * est.std_error <= 5 * h

    def test_upper_bounds_exact_gap_on_discretized_chain(self):
        # Discrete 1-D target on a grid with a +-1 random-walk proposal; the
        # estimator with f = position must sit above the exact eigen gap.
        m = 15
        sites = np.linspace(-3.0, 3.0, m)
        pi = np.exp(-0.5 * sites**2)
        pi /= pi.sum()
        Q = np.zeros((m, m))
        for i in range(m):
            if i > 0:
                Q[i, i - 1] = 0.5
            else:
                Q[i, i] += 0.5
            if i < m - 1:
                Q[i, i + 1] = 0.5
            else:
                Q[i, i] += 0.5
        chain = finite_chain.metropolize(Q, pi)
        exact_gap = finite_chain.spectral_quantities(chain).gap

        rng = substream(16, "discrete-gap")
        n = 40_000
        idx = rng.choice(m, size=n, p=pi)
        nxt = np.array([rng.choice(m, p=chain.T[i]) for i in idx])
        increments = 0.5 * (sites[idx] - sites[nxt]) ** 2
        var_pos = sites[idx].var(ddof=1)
        est = increments.mean() / var_pos
        se = increments.std(ddof=1) / math.sqrt(n) / var_pos
        assert est >= exact_gap - 3 * se

    def test_requires_separable(self):
        import dataclasses

        p = dataclasses.replace(gaussian(3), separable=False)
        with pytest.raises(UnsupportedTargetError):
            dirichlet_gap_upper(p, 0.1, 100, seed=17)


class TestTVEstimator:
    def test_identical_distributions(self):
        def log_density(X):
            return isotropic_gaussian_logpdf(X, 0.0, 1.0)

        def sampler(n, rng):
            return rng.standard_normal((n, 3))

        est = tv_mc_estimate(log_density, log_density, sampler, 10_000, seed=18)
        assert est.value == 0.0

    def test_matches_equal_covariance_closed_form(self):
        d, sigma2 = 8, 0.7
        delta = 2 * math.sqrt(sigma2)
        mean_p = np.zeros(d)
        mean_q = np.zeros(d)
        mean_q[0] = delta

        est = tv_mc_estimate(
            lambda X: isotropic_gaussian_logpdf(X, mean_p, sigma2),
            lambda X: isotropic_gaussian_logpdf(X, mean_q, sigma2),
            lambda n, rng: math.sqrt(sigma2) * rng.standard_normal((n, d)),
            100_000,
            seed=19,
        )
        closed = gaussian_tv_equal_cov(delta, sigma2)
        assert est.value == pytest.approx(closed, abs=3 * est.std_error)

    def test_discretization_tv_bound_smoke(self):
        # TV(OU kernel, proposal) <= (h/2)·sqrt(d + ||x||²)·1.1 at beta = 1.
        d, h = 32, 0.05
        rng = substream(20, "lemma-tv")
        for _ in range(5):
            x = rng.standard_normal(d) * 1.4
            est = _ou_vs_proposal_tv(x, h, 20_000, seed=substream(21, "lemma-tv", _))
            bound = 0.5 * h * math.sqrt(d + float(x @ x)) * 1.1
            assert est.value <= bound + 3 * est.std_error

    def test_non_finite_densities_raise(self):
        def bad_log_q(X):
            out = isotropic_gaussian_logpdf(X, 0.0, 1.0)
            return np.where(X[:, 0] > 0, np.nan, out)

        with pytest.raises(FloatingPointError):
            tv_mc_estimate(
                lambda X: isotropic_gaussian_logpdf(X, 0.0, 1.0),
                bad_log_q,
                lambda n, rng: rng.standard_normal((n, 2)),
                1000,
                seed=22,
            )


def _ou_vs_proposal_tv(x, h, n, seed):
    d = len(x)
    ou_var = -math.expm1(-2 * h)
    mean_ou = math.exp(-h) * x
    mean_q = (1 - h) * x
    return tv_mc_estimate(
        lambda Y: isotropic_gaussian_logpdf(Y, mean_ou, ou_var),
        lambda Y: isotropic_gaussian_logpdf(Y, mean_q, 2 * h),
        lambda m, rng: mean_ou + math.sqrt(ou_var) * rng.standard_normal((m, d)),
        n,
        seed,
    )


class TestProjectionCheck:
    def test_projection_inequality_holds(self):
        report = projection_check_gaussian(0.05, 32, n_states=60, n_mc=4000, seed=23)
        assert report.passed
        assert report.lhs.value <= report.threshold

    def test_both_sides_vanish_with_step(self):
        report = projection_check_gaussian(1e-4, 8, n_states=20, n_mc=1000, seed=24)
        assert report.lhs.value <= 0.01
        assert report.rhs.value <= 0.01

    def test_lhs_matches_1d_quadrature(self):
        h = 0.1
        report = projection_check_gaussian(h, 1, n_states=40, n_mc=4000, seed=25)
        states = substream(25, "projection-states").standard_normal((40, 1))
        oracle = float(np.mean([rejection_quadrature_1d(h, x.item()) for x in states]))
        assert report.lhs.value == pytest.approx(
            oracle, abs=3 * max(report.lhs.std_error, 1e-4)
        )

    def test_step_size_validated(self):
        with pytest.raises(ValueError):
            projection_check_gaussian(0.5, 8, 10, 100, seed=26)


class TestSlicedTV:
    def test_exact_samples_score_near_zero(self):
        p = gaussian(4)
        X = kernels.sample_separable_target(p, 100_000, seed=27)
        val = sliced_tv_to_target(X, kernels.cdf_table_for(p))
        assert 0.0 <= val <= 0.01

    def test_shifted_gaussian_matches_closed_form(self):
        p = gaussian(2)
        rng = substream(28, "shifted")
        X = rng.standard_normal((200_000, 2)) + 0.5
        val = sliced_tv_to_target(X, kernels.cdf_table_for(p))
        closed = 2 * stats.norm.cdf(0.25) - 1
        assert abs(val - closed) <= 0.1 * closed

    def test_requires_enough_samples(self):
        p = gaussian(2)
        with pytest.raises(ValueError):
            sliced_tv_to_target(np.zeros((100, 2)), kernels.cdf_table_for(p))


class TestMixingTime:
    def test_exact_start_is_already_mixed(self):
        p = gaussian(8)

        def sampler(n, rng):
            return kernels.sample_separable_target(p, n, rng)

        steps = mixing_time_measure(p, 0.1, sampler, eps=0.05, max_steps=50,
                                    n_replicas=4096, seed=29)
        assert steps == 0

    def test_warm_start_mixes_in_finite_time(self):
        d = 16
        p = gaussian(d)

        def sampler(n, rng):
            return math.sqrt(0.5) * rng.standard_normal((n, d))

        steps = mixing_time_measure(p, 0.15, sampler, eps=0.05, max_steps=400,
                                    n_replicas=4096, seed=30)
        assert 0 < steps < 400

    def test_ula_plateau_sits_above_mala_plateau(self):
        # ULA's stationary law at h = 0.2 is N(0, 1/(1−h/2)); its sliced-TV
        # plateau must exceed MALA's pure-noise floor.
        p = gaussian(1)
        h, n = 0.2, 65_536
        table = kernels.cdf_table_for(p)

        def plateau(variant, seed):
            rng = substream(seed, "plateau")
            X = kernels.sample_separable_target(p, n, rng)
            levels = []
            for step in range(60):
                if variant == "mala":
                    X, _, _ = kernels.batch_mala_update(p, h, X, rng)
                else:
                    X = kernels.batch_ula_update(p, h, X, rng)
                if step >= 40:
                    levels.append(sliced_tv_to_target(X, table))
            return float(np.mean(levels))

        ula_level = plateau("ula", 31)
        mala_level = plateau("mala", 32)
        closed = 2 * stats.norm.cdf(
            math.sqrt(2 * math.log(1.0526) * 1.0526 / 0.0526) / 2 / 1.026
        ) - 1  # rough scale of the N(0,1.0526)-vs-N(0,1) Kolmogorov gap
        assert ula_level > mala_level + 0.003
        assert ula_level > 0.008  # plateau reflects the bias, not noise

    def test_sentinel_when_never_mixing(self):
        p = gaussian(4)

        def sampler(n, rng):
            return np.full((n, 4), 20.0)

        steps = mixing_time_measure(p, 1e-6, sampler, eps=0.01, max_steps=5,
                                    n_replicas=2048, seed=33)
        assert steps == 5

    def test_eps_validated(self):
        p = gaussian(2)
        with pytest.raises(ValueError):
            mixing_time_measure(p, 0.1, lambda n, rng: np.zeros((n, 2)), 1.5, 10,
                                2048, seed=34)
