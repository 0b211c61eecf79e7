import dataclasses
import math

import numpy as np
import pytest
from scipy import stats

from malalab import kernels
from malalab.kernels import (
    KernelParams,
    batch_mala_update,
    diffusion_reference_step,
    init_chain,
    log_accept_ratio,
    mala_step,
    ou_exact_step,
    propose_mala,
    run_chain,
    sample_separable_target,
    ula_step,
)
from malalab.oracle1d import adversarial_profile, profile_for, quad_expectation
from malalab.potentials import UnsupportedTargetError, adversarial_cosine, gaussian
from malalab.rng import substream


def batch_means_se(series, n_batches=50):
    """Standard error of the mean of a correlated series via batch means."""
    series = np.asarray(series, dtype=float)
    usable = (len(series) // n_batches) * n_batches
    batches = series[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(batches.std(ddof=1) / math.sqrt(n_batches))


class TestProposal:
    def test_variance_at_origin(self):
        p, h, n = gaussian(2), 0.37, 100_000
        rng = substream(123, "prop-var")
        y = propose_mala(p, h, np.zeros((n, 2)), rng)
        se = y[:, 0].__pow__(2).std(ddof=1) / math.sqrt(n)
        for j in range(2):
            assert np.mean(y[:, j] ** 2) == pytest.approx(2 * h, abs=3 * se)

    def test_mean_shrinks_gaussian_state(self):
        p, h, n = gaussian(3), 0.2, 100_000
        x = np.array([1.5, -0.5, 2.0])
        rng = substream(124, "prop-mean")
        y = propose_mala(p, h, np.broadcast_to(x, (n, 3)), rng)
        se = math.sqrt(2 * h / n)
        np.testing.assert_allclose(y.mean(axis=0), (1 - h) * x, atol=3 * se)

    def test_mean_follows_gradient_adversarial(self):
        p, h, n = adversarial_cosine(3, 0.2), 0.15, 100_000
        x = np.array([0.7, -1.1, 0.3])
        rng = substream(125, "prop-adv")
        y = propose_mala(p, h, np.broadcast_to(x, (n, 3)), rng)
        se = math.sqrt(2 * h / n)
        np.testing.assert_allclose(y.mean(axis=0), x - h * p.grad(x), atol=3 * se)


class TestLogAcceptRatio:
    def test_zero_at_equal_points(self):
        for p in (gaussian(4), adversarial_cosine(4, 0.2)):
            x = substream(1, "eq").standard_normal(4)
            assert log_accept_ratio(p, 0.3, x, x) == 0.0

    def test_gaussian_hand_value(self):
        val = log_accept_ratio(gaussian(2), 0.5, np.array([1.0, 0.0]), np.zeros(2))
        assert val == pytest.approx(0.125, abs=1e-12)

    @pytest.mark.parametrize("p", [gaussian(16), adversarial_cosine(16, 0.2)])
    def test_antisymmetry_is_bitwise(self, p):
        rng = substream(2, "antisym")
        X = rng.standard_normal((10_000, 16))
        Y = rng.standard_normal((10_000, 16))
        fwd = log_accept_ratio(p, 0.3, X, Y)
        bwd = log_accept_ratio(p, 0.3, Y, X)
        np.testing.assert_array_equal(fwd, -bwd)

    def test_gaussian_closed_form(self):
        p, h = gaussian(16), 0.3
        rng = substream(3, "closed")
        X = rng.standard_normal((10_000, 16))
        Y = rng.standard_normal((10_000, 16))
        vals = log_accept_ratio(p, h, X, Y)
        closed = (h / 4) * (np.sum(X**2, axis=1) - np.sum(Y**2, axis=1))
        assert np.max(np.abs(vals - closed)) <= 1e-9

    def test_direct_density_oracle(self):
        # Independent route: explicit Gaussian proposal log densities.
        p, h, d = adversarial_cosine(8, 0.2), 0.23, 8
        rng = substream(4, "oracle")
        for _ in range(200):
            x, y = rng.standard_normal(d), rng.standard_normal(d)
            fwd = stats.norm.logpdf(y, loc=x - h * p.grad(x),
                                    scale=math.sqrt(2 * h)).sum()
            bwd = stats.norm.logpdf(x, loc=y - h * p.grad(y),
                                    scale=math.sqrt(2 * h)).sum()
            direct = (-p.value(y) + bwd) - (-p.value(x) + fwd)
            assert log_accept_ratio(p, h, x, y) == pytest.approx(direct, abs=1e-9)

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            log_accept_ratio(gaussian(2), 0.0, np.zeros(2), np.ones(2))


class TestMalaStep:
    def test_tiny_step_accepts(self):
        p = gaussian(4)
        params = KernelParams(h=1e-12)
        state = init_chain(p, np.ones(4), seed=5)
        accepted = 0
        for _ in range(10_000):
            state, rec = mala_step(p, params, state)
            accepted += rec.accepted
        assert accepted / 10_000 >= 0.999

    def test_same_seed_gives_bitwise_identical_chains(self):
        p = adversarial_cosine(6, 0.2)
        params = KernelParams(h=0.4)
        out = []
        for _ in range(2):
            state = init_chain(p, np.zeros(6), seed=77)
            xs = []
            for _ in range(200):
                state, rec = mala_step(p, params, state)
                xs.append(state.x.copy())
            out.append(np.array(xs))
        np.testing.assert_array_equal(out[0], out[1])

    def test_rejection_leaves_state_bitwise_unchanged(self):
        p = gaussian(8)
        params = KernelParams(h=1.9)  # large step to force rejections
        state = init_chain(p, np.full(8, 2.5), seed=6)
        saw_rejection = False
        for _ in range(500):
            before = state.x
            grad_before = state.cached_grad
            state, rec = mala_step(p, params, state)
            if not rec.accepted:
                saw_rejection = True
                assert state.x is before
                assert state.cached_grad is grad_before
                assert rec.sq_displacement_coord1 == 0.0
            else:
                np.testing.assert_array_equal(state.x, rec.proposal)
        assert saw_rejection

    def test_cached_gradient_stays_consistent(self):
        p = adversarial_cosine(5, 0.2)
        params = KernelParams(h=0.6)
        state = init_chain(p, np.zeros(5), seed=8)
        for _ in range(100):
            state, _ = mala_step(p, params, state)
            np.testing.assert_array_equal(state.cached_grad, p.grad(state.x))

    def test_record_invariant(self):
        p = gaussian(3)
        params = KernelParams(h=0.8)
        state = init_chain(p, np.ones(3), seed=9)
        for _ in range(100):
            x_before = state.x.copy()
            state, rec = mala_step(p, params, state)
            expected = (x_before[0] - rec.proposal[0]) ** 2 if rec.accepted else 0.0
            assert rec.sq_displacement_coord1 == expected


@pytest.mark.parametrize("p", [gaussian(16), adversarial_cosine(64, 0.2)])
@pytest.mark.parametrize("k", [1, 10, 100])
def test_stationarity_preserved(p, k):
    n = 4096
    X = sample_separable_target(p, n, seed=10)
    before = X[:, 0] ** 2
    rng = substream(11, "stationarity", k)
    for _ in range(k):
        X, _, _ = batch_mala_update(p, 0.12, X, rng)
    after = X[:, 0] ** 2
    se = math.sqrt(before.var(ddof=1) / n + after.var(ddof=1) / n)
    assert after.mean() == pytest.approx(before.mean(), abs=3 * se)


class TestUlaStep:
    def test_always_accepts(self):
        p = gaussian(2)
        params = KernelParams(h=0.9, variant=kernels.ULA)
        state = init_chain(p, np.ones(2), seed=12)
        for _ in range(50):
            state, rec = ula_step(p, params, state)
            assert rec.accepted

    def test_stationary_variance_bias(self):
        # ULA's stationary variance solves s² = (1−h)²·s² + 2h.
        h = 0.1
        summary = run_chain(gaussian(1), KernelParams(h=h, variant=kernels.ULA),
                            np.zeros(1), 200_000, seed=13, thin=1)
        xs = summary.trajectory[20_000:, 0]
        target = 1.0 / (1.0 - h / 2.0)
        se = batch_means_se(xs**2)
        assert np.mean(xs**2) == pytest.approx(target, abs=3 * se)

    def test_small_step_limit_unbiased(self):
        h = 0.002
        summary = run_chain(gaussian(1), KernelParams(h=h, variant=kernels.ULA),
                            np.zeros(1), 400_000, seed=14, thin=1)
        xs = summary.trajectory[50_000:, 0]
        se = batch_means_se(xs**2)
        assert np.mean(xs**2) == pytest.approx(1.0 / (1.0 - h / 2.0), abs=3 * se)


class TestOUExact:
    def test_large_time_forgets_start(self):
        rng = substream(15, "ou-large")
        x = np.full((50_000, 1), 7.3)
        y = ou_exact_step(50.0, x, rng)
        se = 1.0 / math.sqrt(len(y))
        assert y.mean() == pytest.approx(0.0, abs=3 * se)
        se2 = float((y[:, 0] ** 2).std(ddof=1)) / math.sqrt(len(y))
        assert np.mean(y**2) == pytest.approx(1.0, abs=3 * se2)

    def test_variance_from_origin(self):
        h = 0.35
        rng = substream(16, "ou-var")
        y = ou_exact_step(h, np.zeros((100_000, 1)), rng)
        target = -math.expm1(-2 * h)
        se = float((y[:, 0] ** 2).std(ddof=1)) / math.sqrt(len(y))
        assert np.mean(y**2) == pytest.approx(target, abs=3 * se)

    def test_semigroup_composition(self):
        h, n = 0.8, 100_000
        x0 = np.full((n, 1), 1.7)
        one = ou_exact_step(h, x0, substream(17, "one"))
        two = ou_exact_step(h / 2, ou_exact_step(h / 2, x0, substream(18, "a")),
                            substream(18, "b"))
        se_m = math.sqrt(one.var() / n + two.var() / n)
        assert one.mean() == pytest.approx(two.mean(), abs=3 * se_m)
        se_v = math.sqrt(np.var(one**2) / n + np.var(two**2) / n)
        assert np.mean(one**2) == pytest.approx(np.mean(two**2), abs=3 * se_v)


class TestDiffusionReference:
    def test_single_substep_is_the_proposal(self):
        p, h = adversarial_cosine(4, 0.2), 0.3
        x = np.array([0.5, -1.0, 2.0, 0.0])
        a = diffusion_reference_step(p, h, x, 1, substream(19, "same"))
        b = propose_mala(p, h, x, substream(19, "same"))
        np.testing.assert_array_equal(a, b)

    def test_matches_ou_closed_form(self):
        p, h, n = gaussian(2), 0.1, 60_000
        x = np.broadcast_to(np.array([2.0, -1.0]), (n, 2))
        y = diffusion_reference_step(p, h, x, 256, substream(20, "ou-ref"))
        mean_target = math.exp(-h) * np.array([2.0, -1.0])
        var_target = -math.expm1(-2 * h)
        se_m = float(np.max(y.std(axis=0, ddof=1))) / math.sqrt(n)
        np.testing.assert_allclose(y.mean(axis=0), mean_target, atol=3 * se_m)
        centered = (y - mean_target) ** 2
        se_v = float(np.max(centered.std(axis=0, ddof=1))) / math.sqrt(n)
        np.testing.assert_allclose(centered.mean(axis=0), var_target, atol=3 * se_v)

    def test_self_convergence_in_substeps(self):
        # Cauchy differences of the endpoint mean shrink like 1/substeps.
        p, h, d, n = adversarial_cosine(4, 0.2), 1.5, 4, 200_000
        x = np.broadcast_to(np.full(d, 3.0), (n, d))
        means = {}
        for m in (32, 64, 128):
            y = diffusion_reference_step(p, h, x, m, substream(21, "cauchy", m))
            means[m] = float(y.mean())
        se = math.sqrt(2 * h / (n * d))  # per-coordinate-mean noise scale
        d1 = abs(means[32] - means[64])
        d2 = abs(means[64] - means[128])
        assert d1 > 4 * se  # the coarse level is resolvably biased
        assert d2 <= 0.75 * d1 + 3 * math.sqrt(2) * se

    def test_mean_squared_displacement_bound(self):
        # Continuous-time displacement bound E||X_t − x||² <= 3t(d + beta^{2/3}||x||²).
        n = 20_000
        for p, t in ((gaussian(8), 0.3), (adversarial_cosine(8, 0.2), 0.15)):
            assert t <= 1.0 / (3.0 * p.beta ** (4.0 / 3.0))
            x = np.broadcast_to(np.linspace(-1.5, 1.5, 8), (n, 8))
            y = diffusion_reference_step(p, t, x, 64, substream(22, "msd", p.kind))
            sq = np.sum((y - x) ** 2, axis=1)
            bound = 3 * t * (8 + p.beta ** (2.0 / 3.0) * float(np.sum(x[0] ** 2)))
            se = sq.std(ddof=1) / math.sqrt(n)
            assert sq.mean() <= bound + 3 * se

        # Exact OU cross-check for the Gaussian target.
        t, x = 0.3, np.linspace(-1.5, 1.5, 8)
        exact = (1 - math.exp(-t)) ** 2 * np.sum(x**2) + 8 * (-math.expm1(-2 * t))
        assert exact <= 3 * t * (8 + np.sum(x**2))


class TestRunChain:
    def test_zero_steps(self):
        summary = run_chain(gaussian(3), KernelParams(h=0.1), np.ones(3), 0, seed=23)
        np.testing.assert_array_equal(summary.final_x, np.ones(3))
        assert summary.acceptance_rate is None
        assert summary.mean_sq_displacement_coord1 is None

    def test_stationary_second_moment(self):
        p = gaussian(4)
        x0 = sample_separable_target(p, 1, seed=24)[0]
        summary = run_chain(p, KernelParams(h=0.1), x0, 200_000, seed=25, thin=1)
        xs = summary.trajectory[10_000:, 0]
        se = batch_means_se(xs**2)
        assert np.mean(xs**2) == pytest.approx(1.0, abs=3 * se)

    def test_identical_seeds_identical_summaries(self):
        p = adversarial_cosine(3, 0.2)
        a = run_chain(p, KernelParams(h=0.5), np.zeros(3), 2000, seed=26)
        b = run_chain(p, KernelParams(h=0.5), np.zeros(3), 2000, seed=26)
        np.testing.assert_array_equal(a.final_x, b.final_x)
        assert a.acceptance_rate == b.acceptance_rate
        assert a.mean_sq_displacement_coord1 == b.mean_sq_displacement_coord1

    def test_ou_variant_runs(self):
        summary = run_chain(gaussian(2), KernelParams(h=0.5, variant=kernels.OU_EXACT),
                            np.zeros(2), 100, seed=27)
        assert summary.acceptance_rate == 1.0


class TestSampleSeparableTarget:
    def test_gaussian_kolmogorov_smirnov(self):
        n = 100_000
        X = sample_separable_target(gaussian(2), n, seed=28)
        stat = stats.kstest(X[:, 0], "norm").statistic
        assert stat < 1.63 / math.sqrt(n)  # 1% critical value

    def test_adversarial_second_moment_matches_quadrature(self):
        p = adversarial_cosine(1, 0.2)
        n = 100_000
        X = sample_separable_target(p, n, seed=29)
        target = quad_expectation(profile_for(p), lambda x: x * x)
        se = (X[:, 0] ** 2).std(ddof=1) / math.sqrt(n)
        assert np.mean(X[:, 0] ** 2) == pytest.approx(target, abs=3 * se)
        assert target <= 1.0 + 2.0 * 1.0  # sanity: moment is O(1)

    def test_symmetric_target_has_zero_mean(self):
        p = adversarial_cosine(4, 0.22)
        n = 50_000
        X = sample_separable_target(p, n, seed=30)
        se = X.std(ddof=1) / math.sqrt(n * 4)
        assert float(X.mean()) == pytest.approx(0.0, abs=3 * se)

    def test_non_separable_rejected(self):
        p = dataclasses.replace(gaussian(3), separable=False)
        with pytest.raises(UnsupportedTargetError):
            sample_separable_target(p, 10, seed=31)


def test_kernel_params_validation():
    with pytest.raises(ValueError):
        KernelParams(h=-1.0)
    with pytest.raises(ValueError):
        KernelParams(h=0.1, variant="rwm")
    with pytest.raises(ValueError):
        KernelParams(h=0.1, substeps=0)
    with pytest.raises(ValueError):
        mala_step(gaussian(2), KernelParams(h=0.1, variant=kernels.ULA),
                  init_chain(gaussian(2), np.zeros(2), 0))
