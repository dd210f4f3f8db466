import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpdev.orlicz import (
    DomainError,
    PsiAlphaEstimate,
    centered_norm_bound,
    centering_constant,
    check_stirling_constant,
    equivalence_chain,
    mgf_bound,
    moment_bound,
    psi_alpha_norm,
    scaling_norm,
    stirling_constants,
    tail_bound,
)

# Values computed from exact MGFs before the implementation existed.
RADEMACHER_PSI2 = 1.0 / math.sqrt(math.log(2.0))  # exp(1/t^2) = 2
GAUSSIAN_PSI2 = math.sqrt(8.0 / 3.0)  # (1 - 2/t^2)^(-1/2) = 2
C4_ALPHA2 = 7.921264256323178  # 2 * sqrt(4e) / sqrt(ln 2)


def _empirical_mgf(x, t, alpha):
    return np.mean(np.exp(np.abs(x) ** alpha / t**alpha))


class TestPsiAlphaNorm:
    def test_balanced_signs(self):
        x = np.array([1.0, -1.0] * 500)
        est = psi_alpha_norm(x, 2.0)
        assert est.value == pytest.approx(RADEMACHER_PSI2, rel=1e-6)
        assert est.sample_count == 1000

    def test_all_zero(self):
        for a in (0.5, 1.0, 2.0):
            est = psi_alpha_norm(np.zeros(10), a)
            assert est.value == 0.0 and est.ci_high == 0.0

    def test_gaussian_sample(self):
        rng = np.random.default_rng(11)
        est = psi_alpha_norm(rng.standard_normal(200_000), 2.0, n_boot=50)
        assert est.value == pytest.approx(GAUSSIAN_PSI2, rel=0.02)
        assert est.ci_low <= est.value <= est.ci_high

    def test_small_sample_band_is_sentinel(self):
        est = psi_alpha_norm(np.arange(1.0, 20.0), 2.0)
        assert est.ci_low == 0.0 and math.isinf(est.ci_high)

    def test_definition_holds_at_returned_value(self):
        rng = np.random.default_rng(3)
        x = rng.exponential(size=5000)
        est = psi_alpha_norm(x, 1.0, tolerance=1e-9, n_boot=0)
        assert _empirical_mgf(x, est.value, 1.0) <= 2.0 + 1e-9
        assert _empirical_mgf(x, est.value * (1 - 1e-6), 1.0) > 2.0

    def test_extreme_value_does_not_overflow(self):
        x = np.concatenate([np.ones(999), [1e6]])
        est = psi_alpha_norm(x, 2.0, n_boot=0)
        assert math.isfinite(est.value) and est.value > 1e5

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            psi_alpha_norm([], 2.0)
        with pytest.raises(ValueError):
            psi_alpha_norm([1.0, math.nan], 2.0)
        with pytest.raises(ValueError):
            psi_alpha_norm([1.0], 0.0)

    def test_seed_reproducible(self):
        x = np.random.default_rng(0).standard_normal(2000)
        assert psi_alpha_norm(x, 2.0, seed=4) == psi_alpha_norm(x, 2.0, seed=4)

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=60),
        st.floats(0.1, 100.0),
        st.sampled_from([0.5, 1.0, 2.0]),
    )
    def test_positive_homogeneity(self, xs, c, alpha):
        x = np.array(xs)
        base = psi_alpha_norm(x, alpha, tolerance=1e-10, n_boot=0).value
        scaled = psi_alpha_norm(c * x, alpha, tolerance=1e-10, n_boot=0).value
        assert scaled == pytest.approx(c * base, rel=1e-7, abs=1e-300)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-20, 20, allow_nan=False), min_size=1, max_size=40))
    def test_sign_and_order_invariance(self, xs):
        x = np.array(xs)
        a = psi_alpha_norm(x, 2.0, n_boot=0).value
        b = psi_alpha_norm(-x[::-1], 2.0, n_boot=0).value
        assert a == b


class TestEquivalenceChain:
    def test_alpha2_unit(self):
        ch = equivalence_chain(1.0, 2.0)
        assert ch.K2 == 1.0
        assert ch.K3 == pytest.approx(1.0)
        assert ch.K4 == pytest.approx(math.sqrt(4 * math.e), rel=1e-12)
        assert ch.K4 == pytest.approx(3.2974, abs=1e-4)

    def test_zero(self):
        ch = equivalence_chain(0.0, 1.5)
        assert ch.K2 == ch.K3 == ch.K4 == 0.0

    def test_alpha1(self):
        ch = equivalence_chain(2.0, 1.0)
        assert (ch.K2, ch.K3) == (2.0, 4.0)
        assert ch.K4 == pytest.approx(8 * math.e, rel=1e-12)
        assert ch.K4 == pytest.approx(21.746, abs=1e-3)

    def test_round_trip_factor_is_reported(self):
        ch = equivalence_chain(1.0, 2.0)
        assert ch.psi_from_K4 == pytest.approx((4 * math.e) ** -0.5 * ch.K4)
        assert ch.round_trip_factor == pytest.approx(ch.psi_from_K4)

    def test_stirling_constant_self_check(self):
        assert check_stirling_constant(1.0)
        assert not check_stirling_constant(1.5)

    def test_c7_dominates(self):
        for a in (0.5, 1.0, 1.5, 2.0, 3.0):
            c2, c3, c7 = stirling_constants(a)
            assert c7 >= max(1.0, c3, c2 * c3)


class TestTailAndMoments:
    def test_tail_examples(self):
        assert tail_bound(0.0, 1.0, 2.0) == 1.0
        assert tail_bound(1.0, 1.0, 2.0) == pytest.approx(2 / math.e)
        assert tail_bound(3.0, 1.0, 1.0) == pytest.approx(2 * math.exp(-3))

    def test_tail_vectorised(self):
        out = tail_bound(np.array([0.0, 1.0, 10.0]), 1.0, 2.0)
        assert out.shape == (3,) and out[0] == 1.0 and out[2] < 1e-40

    def test_tail_dominates_rademacher(self):
        # |X| = 1: P(|X| >= t) = 1 for t <= 1; bound with K2 = psi norm must be >= that
        assert tail_bound(1.0, RADEMACHER_PSI2, 2.0) >= 1.0 - 1e-12

    def test_moment_examples(self):
        assert moment_bound(2.0, 1.0, 2.0) == pytest.approx(math.sqrt(2.0))
        assert moment_bound(4.0, 1.5, 2.0) == pytest.approx(3.0)
        assert moment_bound(9.0, 2.0, 1.0) == pytest.approx(18.0)
        with pytest.raises(DomainError):
            moment_bound(1.0, 1.0, 2.0)

    def test_gaussian_moments_respect_bound(self):
        # E|g|^p = 2^(p/2) Gamma((p+1)/2)/sqrt(pi); K3 = C2*K2 with K2 the psi_2 norm
        k3 = equivalence_chain(GAUSSIAN_PSI2, 2.0).K3
        for p in (2, 3, 4, 6, 10, 20):
            exact = (2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)) ** (1 / p)
            assert exact <= moment_bound(p, k3, 2.0)


class TestMgf:
    def test_threshold_case(self):
        c7 = stirling_constants(2.0)[2]
        assert mgf_bound(2 / c7, 1.0, 2.0) == pytest.approx(math.exp(8), rel=1e-10)

    def test_direct(self):
        c7 = stirling_constants(2.0)[2]
        assert math.log(mgf_bound(1.0, 1.0, 2.0)) == pytest.approx((2 * c7) ** 2 / 2, rel=1e-12)
        # (2 C7)^2 / 2 = 8e exactly; 21.745 is the same number with C7 rounded to 3.2974
        assert math.log(mgf_bound(1.0, 1.0, 2.0)) == pytest.approx(8 * math.e, rel=1e-12)
        assert math.log(mgf_bound(1.0, 1.0, 2.0)) == pytest.approx(21.745, abs=2e-3)

    def test_domain(self):
        with pytest.raises(DomainError):
            mgf_bound(0.1, 1.0, 2.0)
        with pytest.raises(DomainError):
            mgf_bound(5.0, 1.0, 1.0)

    def test_overflow_is_inf(self):
        assert mgf_bound(1e6, 1.0, 2.0) == math.inf

    def test_dominates_gaussian_mgf(self):
        # E exp(lam g) = exp(lam^2/2)
        for lam in (0.5, 1.0, 3.0):
            assert math.exp(lam**2 / 2) <= mgf_bound(lam, GAUSSIAN_PSI2, 2.0)


class TestCentering:
    def test_zero(self):
        assert centered_norm_bound(PsiAlphaEstimate(2.0, 0.0, 0.0, 0.0, 10)) == 0.0

    def test_fixed_constant(self):
        assert centering_constant(2.0) == pytest.approx(C4_ALPHA2, rel=1e-14)
        assert centered_norm_bound(PsiAlphaEstimate(2.0, 1.0, 0, 0, 1)) == pytest.approx(C4_ALPHA2)

    def test_linear(self):
        one = centered_norm_bound(PsiAlphaEstimate(2.0, 1.0, 0, 0, 1))
        assert centered_norm_bound(PsiAlphaEstimate(2.0, 3.0, 0, 0, 1)) == pytest.approx(3 * one, rel=1e-15)

    def test_holds_for_shifted_bernoulli(self):
        rng = np.random.default_rng(8)
        x = (rng.random(50_000) < 0.05).astype(float) * 5.0
        lhs = psi_alpha_norm(x - x.mean(), 2.0, n_boot=0).value
        rhs = centered_norm_bound(psi_alpha_norm(x, 2.0, n_boot=0))
        assert lhs <= rhs


class TestScaling:
    def test_examples(self):
        assert scaling_norm(3.7, 1.0) == 3.7
        assert scaling_norm(2.0, 2.0) == 4.0

    def test_rademacher_square_cross_check(self):
        v = scaling_norm(RADEMACHER_PSI2, 2.0)
        assert v == pytest.approx(1 / math.log(2), rel=1e-12)
        assert v == pytest.approx(psi_alpha_norm(np.ones(100), 1.0, tolerance=1e-10).value, rel=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=30), st.sampled_from([0.5, 2.0, 3.0]))
    def test_matches_empirical_power(self, xs, beta):
        x = np.array(xs)
        if not np.any(x):
            return
        lhs = psi_alpha_norm(np.abs(x) ** beta, 1.0, tolerance=1e-11, n_boot=0).value
        rhs = scaling_norm(psi_alpha_norm(x, beta, tolerance=1e-11, n_boot=0).value, beta)
        assert lhs == pytest.approx(rhs, rel=1e-6)
