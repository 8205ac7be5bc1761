"""Reference-law tests: closed-form cases, quadrature oracles, and properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from rmtkit.laws import (
    EigenSpectrum,
    MpParams,
    bbp_threshold,
    estimate_sigma2_mean,
    estimate_sigma2_quantile,
    fit_sigma2,
    load_tw_table,
    mp_cdf,
    mp_density,
    mp_quantile,
    mp_support,
    tw_scaling,
    tw_standardize,
    tw_tail_probability,
    wigner_density,
)

# frozen from the quadrature + bisection oracle (see oracle_mp_cdf below)
MP11_MEDIAN = 0.6527759416335635


def oracle_mp_pdf(lam, sigma2, q):
    lm, lp = sigma2 * (1 - np.sqrt(q)) ** 2, sigma2 * (1 + np.sqrt(q)) ** 2
    if lam <= max(lm, 0.0) or lam >= lp:
        return 0.0
    return np.sqrt((lp - lam) * (lam - lm)) / (2 * np.pi * sigma2 * q * lam)


def oracle_mp_cdf(lam, sigma2=1.0, q=1.0):
    lm = sigma2 * (1 - np.sqrt(q)) ** 2
    lp = sigma2 * (1 + np.sqrt(q)) ** 2
    val, _ = integrate.quad(
        oracle_mp_pdf, max(lm, 0.0), lam, args=(sigma2, q), limit=200, points=[max(lm, 0.0), lp]
    )
    return val


def spectrum_of(values, n=None, d=None):
    values = np.asarray(values, dtype=float)
    n = len(values) if n is None else n
    d = len(values) if d is None else d
    return EigenSpectrum(values=values, n_samples=n, d_features=d)


class TestMpSupport:
    def test_closed_form_cases(self):
        assert mp_support(1.0, 1.0) == (0.0, 4.0)
        assert mp_support(1.0, 0.25) == (0.25, 2.25)
        assert mp_support(2.0, 1.0) == (0.0, 8.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            mp_support(0.0, 1.0)
        with pytest.raises(ValueError):
            mp_support(1.0, -2.0)

    @given(
        st.floats(0.05, 50.0),
        st.floats(0.05, 20.0),
        st.floats(0.1, 10.0),
    )
    def test_scales_linearly_in_sigma2(self, sigma2, q, a):
        lo, hi = mp_support(sigma2, q)
        lo_a, hi_a = mp_support(a * sigma2, q)
        assert lo_a == pytest.approx(a * lo, rel=1e-12, abs=1e-300)
        assert hi_a == pytest.approx(a * hi, rel=1e-12)


class TestMpDensity:
    def test_outside_support_is_zero(self):
        p = MpParams(1.0, 0.5)
        assert mp_density(p.lambda_minus - 1e-9, p) == 0.0
        assert mp_density(p.lambda_plus + 1e-9, p) == 0.0
        assert mp_density(-1.0, p) == 0.0

    def test_interior_value(self):
        # sigma2=1, q=1, lam=2: sqrt((4-2)(2-0)) / (2 pi * 2) = 1 / (2 pi)
        assert mp_density(2.0, MpParams(1.0, 1.0)) == pytest.approx(1 / (2 * np.pi), abs=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            mp_density(np.nan, MpParams(1.0, 1.0))

    @pytest.mark.parametrize("q", [0.1, 0.5, 1.0, 2.0, 4.0])
    def test_mass_is_min_one_inv_q(self, q):
        p = MpParams(1.0, q)
        mass, _ = integrate.quad(
            lambda lam: mp_density(lam, p),
            max(p.lambda_minus, 0.0),
            p.lambda_plus,
            limit=400,
            points=[max(p.lambda_minus, 0.0), p.lambda_plus],
        )
        assert mass == pytest.approx(min(1.0, 1.0 / q), abs=1e-4)


class TestMpQuantile:
    def test_endpoints(self):
        p = MpParams(1.0, 0.5)
        assert mp_quantile(0.0, p) == pytest.approx(p.lambda_minus, abs=1e-12)
        assert mp_quantile(1.0, p) == pytest.approx(p.lambda_plus, abs=1e-12)

    def test_median_against_quadrature_oracle(self):
        assert mp_quantile(0.5, MpParams(1.0, 1.0)) == pytest.approx(MP11_MEDIAN, abs=1e-5)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            mp_quantile(1.5, MpParams(1.0, 1.0))
        with pytest.raises(ValueError):
            mp_quantile(-0.1, MpParams(1.0, 1.0))

    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    @settings(max_examples=50)
    def test_monotone(self, p1, p2):
        params = MpParams(1.3, 0.7)
        lo, hi = sorted([p1, p2])
        assert mp_quantile(lo, params) <= mp_quantile(hi, params) + 1e-12

    @pytest.mark.parametrize("q", [0.25, 1.0, 2.0])
    def test_cdf_quantile_round_trip(self, q):
        params = MpParams(1.0, q)
        lo, hi = params.lambda_minus, params.lambda_plus
        interior = np.linspace(lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo), 25)
        back = mp_quantile(mp_cdf(interior, params), params)
        np.testing.assert_allclose(back, interior, atol=1e-6)

    def test_conditional_bulk_for_q_above_one(self):
        # conditioned on the bulk, quantiles span [lambda_minus, lambda_plus]
        params = MpParams(1.0, 4.0)
        assert mp_quantile(0.0, params) == pytest.approx(params.lambda_minus, abs=1e-12)
        mid = mp_quantile(0.5, params)
        assert params.lambda_minus < mid < params.lambda_plus


class TestSigma2Estimators:
    def test_even_length_median_interpolates(self):
        assert estimate_sigma2_quantile(spectrum_of([1, 2, 3, 4]), 0.5) == pytest.approx(2.5)

    def test_tau_zero_gives_smallest(self):
        assert estimate_sigma2_quantile(spectrum_of([5, 3, 0.5]), 0.0) == pytest.approx(0.5)

    @given(st.floats(0.01, 100.0), st.floats(0.0, 1.0))
    @settings(max_examples=40)
    def test_constant_spectrum_returns_constant(self, c, tau):
        assert estimate_sigma2_quantile(spectrum_of([c, c, c]), tau) == pytest.approx(c)

    def test_mean_estimator(self):
        assert estimate_sigma2_mean(spectrum_of([1, 2, 3, 4])) == pytest.approx(2.5)

    def test_rejects_bad_tau(self):
        with pytest.raises(ValueError):
            estimate_sigma2_quantile(spectrum_of([1.0]), 1.5)


class TestFitSigma2:
    def test_quantile_constructed_spectrum_recovers_sigma2(self):
        params = MpParams(1.0, 0.5)
        d = 500
        vals = mp_quantile((np.arange(d) + 0.5) / d, params)
        spec = spectrum_of(vals, n=1000, d=d)
        fitted = fit_sigma2(spec, 0.5, estimate_sigma2_quantile(spec, 0.5))
        assert fitted.sigma2 == pytest.approx(1.0, rel=0.02)

    def test_gaussian_data_recovery_single_seed(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2000, 500))
        vals = np.linalg.svd(x, compute_uv=False) ** 2 / 2000
        spec = spectrum_of(vals, n=2000, d=500)
        fitted = fit_sigma2(spec, 0.25, estimate_sigma2_quantile(spec, 0.5))
        assert fitted.sigma2 == pytest.approx(1.0, rel=0.05)

    def test_objective_no_worse_than_init(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((300, 120))
        vals = np.linalg.svd(x, compute_uv=False) ** 2 / 300
        spec = spectrum_of(vals, n=300, d=120)
        q = 0.4
        init = estimate_sigma2_quantile(spec, 0.5)
        fitted = fit_sigma2(spec, q, init)

        hi = 1.1 * max(spec.values[0], MpParams(init, q).lambda_plus)
        edges = np.linspace(0.0, hi, 65)
        emp, _ = np.histogram(spec.values, bins=edges, density=True)
        centers = (edges[:-1] + edges[1:]) / 2

        def objective(s2):
            return np.sum((emp - mp_density(centers, MpParams(s2, q))) ** 2)

        assert objective(fitted.sigma2) <= objective(init) + 1e-12

    def test_rejects_degenerate_spectrum(self):
        with pytest.raises(ValueError):
            fit_sigma2(spectrum_of([0.0, 0.0, 0.0]), 1.0, 1.0)

    def test_rejects_too_few_bins(self):
        with pytest.raises(ValueError):
            fit_sigma2(spectrum_of([1.0, 2.0]), 1.0, 1.0, bins=8)


class TestBbpThreshold:
    def test_closed_form_cases(self):
        assert bbp_threshold(1.0, 1.0) == pytest.approx(2.0)
        assert bbp_threshold(1.0, 0.25) == pytest.approx(1.5)
        assert bbp_threshold(2.0, 1.0) == pytest.approx(4.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            bbp_threshold(-1.0, 1.0)
        with pytest.raises(ValueError):
            bbp_threshold(1.0, 0.0)

    @pytest.mark.parametrize("c", [0.1, 0.5, 1.0, 2.0])
    def test_spike_map_sends_threshold_to_bulk_edge(self, c):
        # lam_hat(theta) = sigma2 (theta + c theta / (theta - 1)) evaluated at
        # the normalized critical spike theta = 1 + sqrt(c) lands exactly on
        # lambda_plus.
        sigma2 = 1.7
        theta = bbp_threshold(1.0, c)  # = 1 + sqrt(c), normalized units
        lam_hat = sigma2 * (theta + c * theta / (theta - 1.0))
        assert lam_hat == pytest.approx(mp_support(sigma2, c)[1], abs=1e-9)


class TestWignerDensity:
    def test_center_value(self):
        assert wigner_density(0.0, 1.0) == pytest.approx(1 / np.pi, abs=1e-12)

    def test_outside_support(self):
        assert wigner_density(2.0 + 1e-9, 1.0) == 0.0
        assert wigner_density(-3.0, 1.0) == 0.0

    def test_integral_is_one(self):
        mass, _ = integrate.quad(lambda lam: wigner_density(lam, 1.3), -2 * np.sqrt(1.3), 2 * np.sqrt(1.3))
        assert mass == pytest.approx(1.0, abs=1e-4)


class TestTracyWidom:
    def test_standardize_zero_at_edge(self):
        p = MpParams(1.0, 0.25)
        assert tw_standardize(p.lambda_plus, p, 500) == pytest.approx(0.0, abs=1e-12)

    def test_standardize_monotone_in_lambda1(self):
        p = MpParams(1.0, 0.25)
        grid = np.linspace(0.5, 5.0, 40)
        s = np.array([tw_standardize(l, p, 500) for l in grid])
        assert np.all(np.diff(s) > 0)

    def test_scale_positive_and_n_dependent(self):
        p = MpParams(1.0, 1.0)
        s100 = tw_scaling(p, 100)
        s800 = tw_scaling(p, 800)
        assert s100.scale > s800.scale > 0
        assert s800.scale == pytest.approx(s100.scale / 8 ** (2 / 3), rel=1e-12)

    def test_tail_clamps(self):
        assert tw_tail_probability(-50.0) == 1.0
        assert tw_tail_probability(50.0) == 0.0

    def test_tail_monotone_nonincreasing(self):
        grid = np.linspace(-7.0, 5.0, 200)
        tails = np.array([tw_tail_probability(s) for s in grid])
        assert np.all(np.diff(tails) <= 1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            tw_tail_probability(float("nan"))

    def test_table_well_formed(self):
        s, f = load_tw_table()
        assert len(s) >= 200
        assert s[0] <= -6.0 + 1e-9 and s[-1] >= 4.0 - 1e-9
        assert np.all(np.diff(s) > 0)
        assert np.all(np.diff(f) >= 0)

    def test_pure_noise_median_standardized_fluctuation(self):
        # Monte-Carlo oracle: for Gaussian data the standardized top eigenvalue
        # should fluctuate near the Tracy-Widom bulk of mass (median about -1.3)
        rng = np.random.default_rng(42)
        n, d = 1000, 250
        p = MpParams(1.0, d / n)
        s_vals = []
        for _ in range(200):
            x = rng.standard_normal((n, d))
            lam1 = np.linalg.svd(x, compute_uv=False)[0] ** 2 / n
            s_vals.append(tw_standardize(lam1, p, n))
        med = np.median(s_vals)
        assert -2.5 <= med <= 0.5


class TestEigenSpectrum:
    def test_sorts_descending_and_clamps(self):
        spec = EigenSpectrum(values=np.array([1.0, 3.0, -1e-12]), n_samples=3, d_features=5)
        assert list(spec.values) == [3.0, 1.0, 0.0]

    def test_rejects_large_negative(self):
        with pytest.raises(ValueError):
            EigenSpectrum(values=np.array([1.0, -0.5]), n_samples=2, d_features=2)

    def test_rejects_wrong_count(self):
        with pytest.raises(ValueError):
            EigenSpectrum(values=np.array([1.0, 0.5]), n_samples=5, d_features=5)

    def test_from_covariance_truncates_to_nonzero_part(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((3, 6))
        cov = x.T @ x / 3
        spec = EigenSpectrum.from_covariance(cov, n_samples=3)
        assert len(spec) == 3
        assert spec.trace == pytest.approx(np.trace(cov), rel=1e-10)

    def test_bulk_confinement_for_gaussian_data(self):
        # with q <= 1, almost every eigenvalue falls inside the widened support
        rng = np.random.default_rng(7)
        n, d = 800, 200
        p = MpParams(1.0, d / n)
        delta = 3.0 * tw_scaling(p, n).scale
        fractions = []
        for _ in range(20):
            x = rng.standard_normal((n, d))
            vals = np.linalg.svd(x, compute_uv=False) ** 2 / n
            outside = np.sum((vals < p.lambda_minus - delta) | (vals > p.lambda_plus + delta))
            fractions.append(outside / d)
        assert np.mean(fractions) <= 2.0 / d
