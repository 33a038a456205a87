import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cape_returns.errors import AlignmentError, RangeError, SingularityError
from cape_returns.regression import (
    augmented_regression,
    augmented_regression_pairs,
    bias_correct,
    corrected_rho,
    fit_ar1,
    format_record,
    ols,
)
from cape_returns.synthetic import predictive_system
from cape_returns.validate import bias_study


def _design(x):
    return np.column_stack([np.ones(len(x)), x])


class TestOLS:
    def test_exact_fit(self):
        x = np.linspace(-1, 3, 20)
        fit = ols(2 * x, _design(x))
        np.testing.assert_allclose(fit.coefficients, [0.0, 2.0], atol=1e-14)
        assert np.abs(fit.residuals).max() < 1e-13

    def test_constant_y(self):
        x = np.random.default_rng(0).normal(size=30)
        fit = ols(np.full(30, 4.2), _design(x))
        np.testing.assert_allclose(fit.coefficients, [4.2, 0.0], atol=1e-13)

    def test_normal_equations(self):
        rng = np.random.default_rng(1)
        X = np.column_stack([np.ones(50), rng.normal(size=(50, 2))])
        y = rng.normal(size=50)
        fit = ols(y, X)
        np.testing.assert_allclose(fit.coefficients, np.linalg.solve(X.T @ X, X.T @ y), rtol=1e-12)
        s2 = fit.residuals @ fit.residuals / 47
        np.testing.assert_allclose(fit.coefficient_standard_errors,
                                   np.sqrt(s2 * np.diag(np.linalg.inv(X.T @ X))), rtol=1e-10)
        assert fit.n_observations == 50

    def test_rank_deficient(self):
        x = np.arange(10.0)
        with pytest.raises(SingularityError):
            ols(x, np.column_stack([np.ones(10), x, 2 * x]))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(5, 80))
    def test_residuals_orthogonal(self, seed, n):
        rng = np.random.default_rng(seed)
        X = np.column_stack([np.ones(n), rng.normal(size=n) * 100])
        y = rng.normal(size=n) * 10
        fit = ols(y, X)
        scale = np.abs(X).max() * np.abs(y).max() * n
        assert np.all(np.abs(X.T @ fit.residuals) <= 1e-8 * scale)


class TestAR1:
    def test_constant_is_singular(self):
        with pytest.raises(SingularityError):
            fit_ar1(np.full(20, 3.0))

    def test_exact_half(self):
        x = 0.5 ** np.arange(30)
        assert abs(fit_ar1(x).rho - 0.5) < 1e-12

    def test_residual_mean_zero(self):
        x = np.cumsum(np.random.default_rng(2).normal(size=100))
        assert abs(fit_ar1(x).residuals.mean()) <= 1e-10 * np.abs(x).max()

    def test_ols_rho_biased_down(self):
        rng = np.random.default_rng(7)
        _, x = predictive_system(200, 10_000, rho=0.95, corr=0.0, rng=rng)
        a = x[:, :-1] - x[:, :-1].mean(axis=1, keepdims=True)
        b = x[:, 1:] - x[:, 1:].mean(axis=1, keepdims=True)
        rho = (a * b).sum(axis=1) / (a * a).sum(axis=1)
        assert rho.mean() < 0.95


class TestBiasCorrection:
    def test_published_value(self):
        assert round(corrected_rho(0.9, 100), 5) == 0.93811

    def test_fixed_point_minus_third(self):
        assert corrected_rho(-1 / 3, 50) == -1 / 3

    def test_refuses_small_n(self):
        x = np.random.default_rng(0).normal(size=9)
        with pytest.raises(RangeError):
            bias_correct(fit_ar1(x), x)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(10, 200))
    def test_recombination(self, seed, n):
        x = np.cumsum(np.random.default_rng(seed).normal(size=n))
        bc = bias_correct(fit_ar1(x), x)
        np.testing.assert_allclose(bc.theta_c + bc.rho_c * x[:-1] + bc.proxy_residuals, x[1:],
                                   atol=1e-12 * max(1.0, np.abs(x).max()))
        assert bc.n == n
        assert np.isclose(bc.theta_c, (1 - bc.rho_c) * x.mean())

    @settings(max_examples=50, deadline=None)
    @given(rho=st.floats(-0.3, 1.0), n=st.integers(10, 5000))
    def test_correction_increases_rho(self, rho, n):
        assert corrected_rho(rho, n) > rho


class TestAugmented:
    def test_noiseless(self):
        x = np.cumsum(np.random.default_rng(3).normal(size=61))
        y = 0.1 + 0.05 * x[:-1]
        fit = augmented_regression(y, x)
        assert abs(fit.beta_c - 0.05) < 1e-12 and abs(fit.phi_c) < 1e-10

    def test_vanishing_proxy_equals_ols(self):
        from cape_returns.regression import BiasCorrectedAR1, _augmented_fit

        y, x = predictive_system(80, 1, beta=0.2, rng=4)
        ar1 = fit_ar1(x[0])
        bc = BiasCorrectedAR1(ar1.rho, ar1.theta_ar, np.zeros(80), 81)
        fit = _augmented_fit(y[0], x[0, :-1], ar1, bc)
        assert fit.phi_c == 0.0
        assert fit.beta_c == pytest.approx(ols(y[0], _design(x[0, :-1])).coefficients[1], rel=1e-12)

    def test_alignment(self):
        with pytest.raises(AlignmentError):
            augmented_regression(np.zeros(10), np.zeros(10))

    def test_orthogonality_and_se(self):
        y, x = predictive_system(150, 1, beta=0.3, rho=0.9, rng=5)
        fit = augmented_regression(y[0], x[0])
        bc = bias_correct(fit_ar1(x[0]), x[0])
        e = fit.residuals
        assert abs(e @ x[0, :-1]) < 1e-9 * np.abs(x).max() * len(e)
        assert abs(e @ bc.proxy_residuals) < 1e-9 * len(e)
        assert fit.t_statistic == fit.beta_c / fit.beta_c_standard_error
        assert np.allclose(fit.error_covariance, fit.error_covariance.T)
        assert np.all(np.linalg.eigvalsh(fit.error_covariance) >= -1e-12)
        plain_se = ols(y[0], np.column_stack([np.ones(150), x[0, :-1], bc.proxy_residuals]))
        assert fit.beta_c_standard_error >= plain_se.coefficient_standard_errors[1]

    def test_pairs_match_chain(self):
        y, x = predictive_system(100, 1, beta=0.1, rng=6)
        a = augmented_regression(y[0], x[0])
        b = augmented_regression_pairs(y[0], x[0, :-1], x[0, 1:], x[0])
        assert a.beta_c == pytest.approx(b.beta_c, rel=1e-12)

    def test_record_format(self):
        y, x = predictive_system(50, 1, rng=7)
        text = format_record(augmented_regression(y[0], x[0]), scale=12e4, prefix="gross.")
        keys = [ln.split(" = ")[0] for ln in text.splitlines()]
        assert "gross.beta" in keys and "gross.n" in keys
        assert "np.float64" not in text


def test_endogeneity_bias_sign():
    r = bias_study(reps=3000, n=200, rho=0.95, corr=-0.9, seed=11)
    # negative corr(u, v) with downward rho bias pushes the OLS slope up
    assert r["bias_beta_ols"] > 0
    assert r["bias_rho_ols"] < 0
