"""Oracle tests for the zero-inflated Poisson distribution layer.

Every closed form is checked against an independent computation: truncated
series over the support, scipy's Poisson pmf, finite sampling, or numeric
root finding.
"""

import math

import numpy as np
import pytest
from scipy import stats
from scipy.optimize import brentq

from zits.zip_dist import (
    HurdleParams,
    NonRepresentable,
    ZipParams,
    bayes_flag,
    bernstein_tail_bound,
    excess_risk,
    hellinger_sq_zip,
    hurdle_to_zip,
    kl_bernoulli,
    kl_hurdle,
    kl_poisson,
    kl_zip,
    mgf_quadratic_bound,
    orlicz_psi1_poisson,
    orlicz_psi1_zip,
    posterior_false_zero,
    truncation_point,
    zip_mean,
    zip_mgf_centered,
    zip_pmf,
    zip_sample,
    zip_to_hurdle,
    zip_var,
)

GRID = [ZipParams(p, lam) for p in (0.0, 0.3, 0.9) for lam in (0.1, 2.0, 20.0)]


def support(*params):
    return np.arange(truncation_point(max(q.lam for q in params)) + 1)


def pmf_oracle(params, cs):
    """ZIP pmf built from scipy's Poisson pmf, independent of zip_pmf."""
    pois = stats.poisson.pmf(cs, params.lam)
    out = (1.0 - params.p) * pois
    out[cs == 0] += params.p
    return out


class TestPmfMoments:
    @pytest.mark.parametrize("params", GRID)
    def test_pmf_matches_oracle(self, params):
        cs = support(params)
        np.testing.assert_allclose(zip_pmf(params, cs), pmf_oracle(params, cs),
                                   rtol=1e-12, atol=1e-300)

    @pytest.mark.parametrize("params", GRID)
    def test_pmf_normalizes(self, params):
        assert zip_pmf(params, support(params)).sum() == pytest.approx(1.0, abs=1e-12)

    def test_pmf_negative_c_is_zero(self):
        assert zip_pmf(ZipParams(0.2, 3.0), [-1, -5]).tolist() == [0.0, 0.0]

    @pytest.mark.parametrize("params", GRID)
    def test_moments_match_series(self, params):
        cs = support(params)
        pm = zip_pmf(params, cs)
        mean = float(np.sum(cs * pm))
        var = float(np.sum(cs * cs * pm)) - mean * mean
        assert zip_mean(params) == pytest.approx(mean, rel=1e-10, abs=1e-12)
        assert zip_var(params) == pytest.approx(var, rel=1e-9, abs=1e-12)

    def test_sampling_moments(self):
        rng = np.random.default_rng(0)
        params = ZipParams(0.4, 5.0)
        draws = zip_sample(params, 200_000, rng)
        se_mean = math.sqrt(zip_var(params) / draws.size)
        assert abs(draws.mean() - zip_mean(params)) < 4 * se_mean
        assert abs(draws.var() - zip_var(params)) < 0.05 * zip_var(params)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            ZipParams(1.0, 1.0)
        with pytest.raises(ValueError):
            ZipParams(-0.1, 1.0)
        with pytest.raises(ValueError):
            ZipParams(0.5, 51.0)
        with pytest.raises(ValueError):
            ZipParams(0.5, 0.0)

    def test_truncation_tail_negligible(self):
        for lam in (0.1, 2.0, 50.0):
            t = truncation_point(lam)
            assert stats.poisson.sf(t, lam) < 1e-13


class TestHurdle:
    def test_roundtrip(self):
        for params in GRID:
            h = zip_to_hurdle(params)
            back = hurdle_to_zip(h)
            assert back.p == pytest.approx(params.p, abs=1e-12)
            assert back.lam == params.lam

    def test_zero_mass(self):
        params = ZipParams(0.3, 2.0)
        assert zip_to_hurdle(params).pi0 == pytest.approx(
            float(zip_pmf(params, [0])[0]), rel=1e-12)

    def test_non_representable(self):
        # pi0 below the Poisson floor e^{-lam} cannot come from a ZIP.
        with pytest.raises(NonRepresentable):
            hurdle_to_zip(HurdleParams(0.1, 0.5))


def hurdle_pmf(h, cs):
    pois = stats.poisson.pmf(cs, h.lam)
    out = (1.0 - h.pi0) * pois / (1.0 - math.exp(-h.lam))
    out[cs == 0] = h.pi0
    return out


class TestDivergences:
    def test_kl_bernoulli_oracle(self):
        for p, q in [(0.0, 0.5), (0.3, 0.7), (1.0, 0.2), (0.5, 0.5)]:
            want = sum(
                a * math.log(a / b)
                for a, b in [(p, q), (1 - p, 1 - q)] if a > 0
            )
            assert kl_bernoulli(p, q) == pytest.approx(want, abs=1e-12)

    def test_kl_poisson_oracle(self):
        for lam, lam2 in [(1.0, 3.0), (5.0, 0.5), (2.0, 2.0)]:
            cs = support(ZipParams(0.0, max(lam, lam2)))
            pa = stats.poisson.pmf(cs, lam)
            pb = stats.poisson.pmf(cs, lam2)
            want = float(np.sum(pa[pa > 0] * np.log(pa[pa > 0] / pb[pa > 0])))
            assert kl_poisson(lam, lam2) == pytest.approx(want, rel=1e-9, abs=1e-12)

    def test_kl_hurdle_oracle(self):
        cases = [(HurdleParams(0.4, 2.0), HurdleParams(0.6, 1.0)),
                 (HurdleParams(0.2, 5.0), HurdleParams(0.2, 5.0)),
                 (HurdleParams(0.9, 0.3), HurdleParams(0.5, 4.0))]
        for a, b in cases:
            cs = support(ZipParams(0.0, max(a.lam, b.lam)))
            pa = hurdle_pmf(a, cs)
            pb = hurdle_pmf(b, cs)
            want = float(np.sum(pa[pa > 0] * np.log(pa[pa > 0] / pb[pa > 0])))
            assert kl_hurdle(a, b) == pytest.approx(want, rel=1e-9, abs=1e-12)

    def test_kl_zip_oracle(self):
        cases = [(ZipParams(0.3, 2.0), ZipParams(0.5, 1.0)),
                 (ZipParams(0.0, 4.0), ZipParams(0.2, 4.0)),
                 (ZipParams(0.7, 10.0), ZipParams(0.7, 10.0))]
        for a, b in cases:
            cs = support(a, b)
            pa = pmf_oracle(a, cs)
            pb = pmf_oracle(b, cs)
            want = float(np.sum(pa[pa > 0] * np.log(pa[pa > 0] / pb[pa > 0])))
            assert kl_zip(a, b) == pytest.approx(want, rel=1e-9, abs=1e-12)

    def test_hellinger_oracle(self):
        cases = [(ZipParams(0.3, 2.0), ZipParams(0.5, 1.0)),
                 (ZipParams(0.0, 0.5), ZipParams(0.9, 8.0)),
                 (ZipParams(0.4, 3.0), ZipParams(0.4, 3.0))]
        for a, b in cases:
            cs = support(a, b)
            want = float(np.sum((np.sqrt(pmf_oracle(a, cs))
                                 - np.sqrt(pmf_oracle(b, cs))) ** 2))
            assert hellinger_sq_zip(a, b) == pytest.approx(want, rel=1e-9, abs=1e-12)

    def test_hellinger_below_kl(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            a = ZipParams(rng.uniform(0, 0.95), rng.uniform(0.1, 20))
            b = ZipParams(rng.uniform(0, 0.95), rng.uniform(0.1, 20))
            assert hellinger_sq_zip(a, b) <= kl_zip(a, b) + 1e-9


class TestOrlicz:
    @pytest.mark.parametrize("lam", [0.1, 1.0, 5.0, 30.0])
    def test_poisson_norm_is_numeric_root(self, lam):
        cs = support(ZipParams(0.0, lam))
        pm = stats.poisson.pmf(cs, lam)

        def cond(t):
            return float(np.sum(pm * np.exp(cs / t))) - 2.0

        root = brentq(cond, orlicz_psi1_poisson(lam) * 0.5,
                      orlicz_psi1_poisson(lam) * 2.0, xtol=1e-12)
        assert orlicz_psi1_poisson(lam) == pytest.approx(root, abs=1e-8)

    @pytest.mark.parametrize("params", [ZipParams(0.3, 1.0), ZipParams(0.8, 6.0)])
    def test_zip_norm_is_numeric_root(self, params):
        cs = support(params)
        pm = pmf_oracle(params, cs)

        def cond(t):
            return float(np.sum(pm * np.exp(cs / t))) - 2.0

        guess = orlicz_psi1_zip(params)
        root = brentq(cond, guess * 0.5, guess * 2.0, xtol=1e-12)
        assert guess == pytest.approx(root, abs=1e-8)

    def test_zip_lighter_tail_than_poisson(self):
        for params in GRID:
            if params.p > 0:
                assert orlicz_psi1_zip(params) < orlicz_psi1_poisson(params.lam)
            else:
                assert orlicz_psi1_zip(params) == pytest.approx(
                    orlicz_psi1_poisson(params.lam), rel=1e-12)


class TestMgf:
    @pytest.mark.parametrize("params", [ZipParams(0.3, 2.0), ZipParams(0.7, 0.5)])
    def test_exact_mgf_matches_series(self, params):
        cs = support(params)
        pm = pmf_oracle(params, cs)
        mean = zip_mean(params)
        for t in (-0.5, -0.1, 0.05, 0.3):
            want = float(np.sum(pm * np.exp(t * (cs - mean))))
            assert zip_mgf_centered(params, t) == pytest.approx(want, rel=1e-9)

    def test_quadratic_bound_dominates(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            params = ZipParams(rng.uniform(0, 0.95), rng.uniform(0.1, 20))
            m = max(1.0, params.lam)
            t = rng.uniform(-0.99, 0.99) / m
            lhs = math.log(zip_mgf_centered(params, t))
            assert lhs <= mgf_quadratic_bound(params, t) + 1e-9

    def test_bound_domain(self):
        with pytest.raises(ValueError):
            mgf_quadratic_bound(ZipParams(0.1, 4.0), 0.3)


class TestBernstein:
    def test_bound_value(self):
        params = ZipParams(0.3, 2.0)
        n, margin = 50, 0.5
        v = n * zip_var_bound(params)
        want = math.exp(-(n * margin) ** 2
                        / (2.0 * (v + n * margin * max(1.0, params.lam))))
        assert bernstein_tail_bound(params, n, margin) == pytest.approx(want, rel=1e-12)

    def test_monte_carlo_never_exceeds(self):
        rng = np.random.default_rng(3)
        params = ZipParams(0.4, 3.0)
        n, reps = 20, 20_000
        draws = zip_sample(params, (reps, n), rng)
        means = draws.mean(axis=1) - zip_mean(params)
        for margin in (0.5, 1.0, 2.0):
            emp = float(np.mean(means >= margin))
            assert emp <= bernstein_tail_bound(params, n, margin) + 3e-3


def zip_var_bound(params):
    """Bernstein variance proxy lambda (1 + p (1 - p) lambda)."""
    p, lam = params.p, params.lam
    return lam * (1.0 + p * (1.0 - p) * lam)


class TestBayesDecision:
    def test_posterior_hand_value(self):
        # p = 0.9, lam = 1: masked-positive mass 0.9 (1 - e^-1) = 0.56890698...,
        # observed-zero mass 0.9 + 0.1 e^-1 = 0.93678794...
        assert posterior_false_zero(0.9, 1.0) == pytest.approx(
            0.9 * (1 - math.exp(-1)) / (0.9 + 0.1 * math.exp(-1)), rel=1e-12)
        assert posterior_false_zero(0.9, 1.0) == pytest.approx(0.607297, abs=1e-6)

    def test_flag_iff_posterior_above_half(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            p = rng.uniform(1e-6, 0.999)
            lam = rng.uniform(1e-3, 50.0)
            assert bayes_flag(p, lam) == (posterior_false_zero(p, lam) > 0.5)

    def test_flag_overflow_safe(self):
        assert not bayes_flag(1e-300, 50.0)
        assert not bayes_flag(0.0, 50.0)
        assert bayes_flag(0.9, 50.0)

    def test_excess_risk_values(self):
        # Bayes rule at (0.9, 1) flags, so flagging costs nothing and keeping
        # costs |0.56890698 - 0.36787944| / 0.93678794 = 0.21459415.
        assert excess_risk(0.9, 1.0, "false_zero") == 0.0
        assert excess_risk(0.9, 1.0, "true_zero") == pytest.approx(0.214594, abs=1e-6)
        # At (0.1, 0.5) Bayes keeps: flag mass 0.03934693 < e^-0.5 = 0.60653066.
        assert excess_risk(0.1, 0.5, "true_zero") == 0.0
        assert excess_risk(0.1, 0.5, "false_zero") > 0.0

    def test_excess_risk_is_posterior_gap(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            p = rng.uniform(1e-3, 0.99)
            lam = rng.uniform(0.1, 20.0)
            post = posterior_false_zero(p, lam)
            gap = abs(2 * post - 1)
            worse = "true_zero" if bayes_flag(p, lam) else "false_zero"
            assert excess_risk(p, lam, worse) == pytest.approx(gap, rel=1e-10)

    def test_unknown_decision(self):
        with pytest.raises(ValueError):
            excess_risk(0.5, 1.0, "maybe")
