import math

import mpmath as mp
import numpy as np
import pytest

from policyavg.distributions import (
    ChiSquareParams,
    DistFamily,
    ExponentialParams,
    InverseGammaParams,
    NormalParams,
    StudentTParams,
    cdf,
    log_likelihood,
    mle_fit,
    quantile,
)

ALL_FAMILIES = list(DistFamily)


class TestMleFit:
    def test_normal_closed_form(self):
        rng = np.random.default_rng(0)
        x = rng.normal(60, 10, size=5000)
        params = mle_fit(DistFamily.NORMAL, x)
        assert params.mu == pytest.approx(x.mean(), abs=1e-12)
        assert params.sigma == pytest.approx(x.std(), abs=1e-12)

    def test_exponential_inverse_mean(self):
        rng = np.random.default_rng(1)
        x = rng.exponential(2.0, size=4000)
        params = mle_fit(DistFamily.EXPONENTIAL, x)
        assert params.rate == pytest.approx(1.0 / x.mean(), abs=1e-12)

    def test_chi_square_against_grid_search_oracle(self):
        rng = np.random.default_rng(2)
        x = rng.chisquare(7.0, size=10_000)
        params = mle_fit(DistFamily.CHI_SQUARE, x)
        assert params.k == pytest.approx(7.0, abs=0.2)
        # grid over k in [1, 20] step 0.01 maximizing the log likelihood
        grid = np.arange(1.0, 20.0, 0.01)
        lls = [log_likelihood(DistFamily.CHI_SQUARE, ChiSquareParams(k), x) for k in grid]
        k_grid = grid[int(np.argmax(lls))]
        assert params.k == pytest.approx(k_grid, abs=0.01)

    def test_inverse_gamma_recovers_shape(self):
        rng = np.random.default_rng(3)
        alpha, beta = 6.0, 40.0
        x = 1.0 / rng.gamma(alpha, 1.0 / beta, size=20_000)
        params = mle_fit(DistFamily.INVERSE_GAMMA, x)
        assert params.alpha == pytest.approx(alpha, rel=0.05)
        assert params.beta == pytest.approx(beta, rel=0.05)

    def test_student_t_estimated_df(self):
        rng = np.random.default_rng(4)
        x = 3.0 + 2.0 * rng.standard_t(5, size=8000)
        params = mle_fit(DistFamily.STUDENT_T, x)
        assert params.loc == pytest.approx(3.0, abs=0.15)
        assert params.scale == pytest.approx(2.0, abs=0.15)
        assert params.df == pytest.approx(5.0, abs=1.5)

    def test_student_t_fixed_df(self):
        rng = np.random.default_rng(5)
        x = rng.normal(60, 10, size=2000)
        params = mle_fit(DistFamily.STUDENT_T, x, student_df=4.0)
        assert params.df == 4.0
        assert params.loc == pytest.approx(60, abs=0.8)

    def test_positive_support_enforced(self):
        bad = np.array([1.0, -2.0, 3.0])
        for family in (DistFamily.EXPONENTIAL, DistFamily.CHI_SQUARE, DistFamily.INVERSE_GAMMA):
            with pytest.raises(ValueError):
                mle_fit(family, bad)

    def test_minimum_sample_count(self):
        with pytest.raises(ValueError):
            mle_fit(DistFamily.NORMAL, [1.0, 2.0])

    def test_mle_beats_perturbed_params(self):
        rng = np.random.default_rng(6)
        x = rng.chisquare(9.0, size=3000)
        for family in ALL_FAMILIES:
            params = mle_fit(family, x)
            base = log_likelihood(family, params, x)
            for _ in range(5):
                bump = 1.0 + rng.uniform(0.02, 0.1) * rng.choice([-1, 1])
                if family is DistFamily.NORMAL:
                    pert = NormalParams(params.mu * bump, params.sigma * bump)
                elif family is DistFamily.EXPONENTIAL:
                    pert = ExponentialParams(params.rate * bump)
                elif family is DistFamily.CHI_SQUARE:
                    pert = ChiSquareParams(params.k * bump)
                elif family is DistFamily.STUDENT_T:
                    pert = StudentTParams(params.loc * bump, params.scale * bump, params.df)
                else:
                    pert = InverseGammaParams(params.alpha * bump, params.beta * bump)
                assert base >= log_likelihood(family, pert, x) - 1e-6

    def test_scale_equivariance(self):
        rng = np.random.default_rng(7)
        x = np.abs(rng.normal(10, 2, size=800)) + 0.5
        c = 3.7
        for family in (DistFamily.NORMAL, DistFamily.EXPONENTIAL,
                       DistFamily.STUDENT_T, DistFamily.INVERSE_GAMMA):
            base = mle_fit(family, x, student_df=6.0)
            scaled = mle_fit(family, c * x, student_df=6.0)
            if family is DistFamily.NORMAL:
                assert scaled.mu == pytest.approx(c * base.mu, rel=1e-9)
                assert scaled.sigma == pytest.approx(c * base.sigma, rel=1e-9)
            elif family is DistFamily.EXPONENTIAL:
                assert 1.0 / scaled.rate == pytest.approx(c / base.rate, rel=1e-9)
            elif family is DistFamily.STUDENT_T:
                assert scaled.loc == pytest.approx(c * base.loc, rel=1e-3)
                assert scaled.scale == pytest.approx(c * base.scale, rel=1e-3)
            else:
                assert scaled.beta == pytest.approx(c * base.beta, rel=1e-6)
                assert scaled.alpha == pytest.approx(base.alpha, rel=1e-6)


class TestQuantile:
    def test_normal_third_quartile_level(self):
        q = quantile(DistFamily.NORMAL, NormalParams(60.0, 10.0), 0.75)
        assert q == pytest.approx(66.7449, abs=1e-3)

    def test_exponential_unit_point(self):
        lam = 0.8
        q = quantile(DistFamily.EXPONENTIAL, ExponentialParams(lam), 1.0 - math.exp(-1.0))
        assert q == pytest.approx(1.0 / lam, abs=1e-10)

    def test_student_t_against_mpmath(self):
        # mpmath root of the exact CDF: t(5) 0.75-quantile
        q = quantile(DistFamily.STUDENT_T, StudentTParams(0.0, 1.0, 5.0), 0.75)
        assert q == pytest.approx(0.72668684380042265, abs=1e-6)

    def test_round_trip_all_families(self):
        params = {
            DistFamily.NORMAL: NormalParams(5.0, 2.0),
            DistFamily.EXPONENTIAL: ExponentialParams(0.5),
            DistFamily.CHI_SQUARE: ChiSquareParams(7.0),
            DistFamily.STUDENT_T: StudentTParams(1.0, 2.0, 6.0),
            DistFamily.INVERSE_GAMMA: InverseGammaParams(4.0, 9.0),
        }
        for family in ALL_FAMILIES:
            for p in np.arange(0.05, 0.96, 0.05):
                q = quantile(family, params[family], float(p))
                assert cdf(family, params[family], q) == pytest.approx(p, abs=1e-10)

    def test_strictly_increasing_in_p(self):
        params = {
            DistFamily.NORMAL: NormalParams(0.0, 1.0),
            DistFamily.EXPONENTIAL: ExponentialParams(1.0),
            DistFamily.CHI_SQUARE: ChiSquareParams(4.0),
            DistFamily.STUDENT_T: StudentTParams(0.0, 1.0, 4.0),
            DistFamily.INVERSE_GAMMA: InverseGammaParams(3.0, 5.0),
        }
        grid = np.arange(0.05, 0.96, 0.05)
        for family in ALL_FAMILIES:
            qs = [quantile(family, params[family], float(p)) for p in grid]
            assert np.all(np.diff(qs) > 0)

    def test_fit_then_quantile_recovers_true_quartile(self):
        rng = np.random.default_rng(9)
        draws = {
            DistFamily.NORMAL: rng.normal(60, 10, 10_000),
            DistFamily.EXPONENTIAL: rng.exponential(3.0, 10_000),
            DistFamily.CHI_SQUARE: rng.chisquare(7, 10_000),
            DistFamily.STUDENT_T: 2.0 + 1.5 * rng.standard_t(6, 10_000),
            DistFamily.INVERSE_GAMMA: 1.0 / rng.gamma(5.0, 1.0 / 30.0, 10_000),
        }
        true_q75 = {
            DistFamily.NORMAL: 60 + 10 * 0.6744897501960817,
            DistFamily.EXPONENTIAL: 3.0 * math.log(4.0),
            DistFamily.CHI_SQUARE: quantile(DistFamily.CHI_SQUARE, ChiSquareParams(7.0), 0.75),
            DistFamily.STUDENT_T: 2.0 + 1.5 * quantile(
                DistFamily.STUDENT_T, StudentTParams(0.0, 1.0, 6.0), 0.75),
            DistFamily.INVERSE_GAMMA: quantile(
                DistFamily.INVERSE_GAMMA, InverseGammaParams(5.0, 30.0), 0.75),
        }
        for family in ALL_FAMILIES:
            fitted = mle_fit(family, draws[family])
            q = quantile(family, fitted, 0.75)
            assert q == pytest.approx(true_q75[family], rel=0.02)

    def test_p_domain(self):
        with pytest.raises(ValueError):
            quantile(DistFamily.NORMAL, NormalParams(0, 1), 0.0)


class TestLogLikelihood:
    def test_standard_normal_at_origin(self):
        ll = log_likelihood(DistFamily.NORMAL, NormalParams(0.0, 1.0), [0.0])
        assert ll == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)

    def test_unit_exponential(self):
        ll = log_likelihood(DistFamily.EXPONENTIAL, ExponentialParams(1.0), [1.0, 2.0])
        assert ll == pytest.approx(-3.0, abs=1e-12)

    def test_outside_support_is_minus_inf(self):
        assert log_likelihood(DistFamily.CHI_SQUARE, ChiSquareParams(3.0), [-1.0]) == -math.inf
        assert log_likelihood(DistFamily.INVERSE_GAMMA, InverseGammaParams(2, 2), [0.0]) == -math.inf

    def test_densities_integrate_against_mpmath(self):
        # spot-check one family's CDF against direct quadrature of the density
        mp.mp.dps = 20
        params = InverseGammaParams(4.0, 9.0)
        a, b = params.alpha, params.beta

        def pdf(x):
            return b ** a / mp.gamma(a) * x ** (-a - 1) * mp.e ** (-b / x)

        for x0 in (1.0, 2.5, 6.0):
            want = float(mp.quad(pdf, [0, x0]))
            assert cdf(DistFamily.INVERSE_GAMMA, params, x0) == pytest.approx(want, abs=1e-10)
