import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cape_returns import kernels
from cape_returns.dynamics import (
    LinearForm,
    ModelState,
    _dividend_kernels,
    asymptotic_yield,
    damping_scale,
    dividend_contribution_moments,
    exact_dividend_moments,
    exact_dividend_moments_grid,
    expected_log_dp,
    expected_Y,
    expected_yield,
    leading_correction,
    load_params,
    params_from_dict,
    params_to_dict,
    published_params,
    save_params,
    spectrum,
    step,
    system_matrix,
    variance_Y,
    variance_Y_matrix,
)
from cape_returns.errors import ConfigError, ConstraintError, DegenerateSpectrumError
from cape_returns.scenarios import InitialConditions, simulate


def _quiet(p):
    return p.with_(sigma_mu=0.0, sigma_p=0.0, sigma_d=0.0)


def _iterate(p, log_ep0, mu0, hmax, log_dp0=float("nan")):
    s = ModelState.initial(log_ep0, mu0, log_dp0)
    out = []
    for _ in range(hmax):
        s = step(s, p)
        out.append(s)
    return out


class TestSpectrum:
    def test_sp_eigenvalues(self):
        sp = spectrum((0.25, 0.03))
        ev = np.sort(np.linalg.eigvals(system_matrix(0.25, 0.03)).real)
        assert sp.lambda_plus == pytest.approx(0.95761, abs=1e-5)
        assert sp.lambda_minus == pytest.approx(0.29239, abs=1e-5)
        np.testing.assert_allclose([sp.lambda_minus, sp.lambda_plus, 1.0], ev, atol=1e-12)

    def test_nyse_eigenvalues(self):
        sp = spectrum((0.08, 0.03))
        ev = np.sort(np.linalg.eigvals(system_matrix(0.08, 0.03)).real)
        np.testing.assert_allclose([sp.lambda_minus, sp.lambda_plus], ev[:2], atol=1e-12)

    def test_determinant_and_unit_eigenvalue(self):
        sp = spectrum((0.25, 0.03))
        assert np.linalg.det(sp.Q) == pytest.approx(0.03 * (sp.lambda_minus - sp.lambda_plus), rel=1e-12)
        assert 1.0 in np.diag(sp.Lambda)

    def test_degenerate_flagged(self):
        sp = spectrum((0.5, 0.0625))
        assert sp.degenerate and sp.lambda_plus == sp.lambda_minus == 0.75
        with pytest.raises(DegenerateSpectrumError):
            sp.require_nondegenerate()

    def test_complex_rejected(self):
        with pytest.raises(ConstraintError):
            spectrum((0.5, 0.07))

    @settings(max_examples=200, deadline=None)
    @given(gamma=st.floats(1e-3, 1 - 1e-3), frac=st.floats(1e-3, 0.999))
    def test_eigenvalues_real_in_unit_interval(self, gamma, frac):
        kappa = frac * (1 - gamma) ** 2 / 4
        sp = spectrum((gamma, kappa))
        assert 0 < sp.lambda_minus <= sp.lambda_plus < 1
        err = np.abs(sp.Q @ sp.Lambda @ sp.Q_inverse - sp.J).max()
        # the lambda = 1 and lambda_+ eigenvectors merge as kappa -> 0
        assert err <= 1e-12 + 1e-14 * (1 - gamma) / kappa


class TestStep:
    def test_fixed_point(self, sp_params):
        p = _quiet(sp_params).with_(H_linear=LinearForm(0.0, -1.0), F_linear=LinearForm(0.0, 0.0))
        s1 = step(ModelState.initial(-3.0, 0.0), p)
        assert s1.mu == 0.0 and s1.Y == 3.0

    def test_dividend_fixed_point(self, sp_params):
        p = _quiet(sp_params)
        lg = p.log_G(-3.0)
        assert all(abs(s.log_dp - lg) < 1e-15 for s in _iterate(p, -3.0, 0.0, 50, lg))

    def test_h1_closed_form(self, sp_params):
        p = _quiet(sp_params)
        s1 = step(ModelState.initial(-2.9, 0.004), p)
        assert expected_Y(1, p, 2.9, 0.004) == pytest.approx(s1.Y, abs=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(gamma=st.floats(0.05, 0.9), frac=st.floats(0.05, 0.95), x0=st.floats(-3.5, -2.0),
           mu0=st.floats(-0.05, 0.05))
    def test_recursion_matches_closed_form(self, gamma, frac, x0, mu0):
        p = _quiet(published_params("sp")).with_(gamma=gamma, kappa=frac * (1 - gamma) ** 2 / 4)
        path = np.array([s.Y for s in _iterate(p, x0, mu0, 240)])
        closed = expected_Y(np.arange(1, 241), p, -x0, mu0)
        assert np.abs(path - closed).max() <= 1e-10

    def test_secular_growth(self, sp_params):
        h = 2_000
        slope = (expected_Y(2 * h, sp_params, 3.0, 0.0) - expected_Y(h, sp_params, 3.0, 0.0)) / h
        assert slope == pytest.approx(sp_params.growth(-3.0), rel=1e-12)


class TestVariance:
    def test_noiseless(self, sp_params):
        assert variance_Y(100, sp_params.with_(sigma_mu=0.0, sigma_p=0.0)) == 0.0

    def test_first_month_deterministic(self, sp_params):
        assert variance_Y(1, sp_params) == 0.0

    def test_sum_matches_matrix_powers(self, sp_params):
        for h in (2, 17, 120):
            assert variance_Y(h, sp_params) == pytest.approx(variance_Y_matrix(h, sp_params), rel=1e-10)

    def test_one_over_h_rate(self, sp_params):
        h = np.array([20_000, 40_000])
        r = variance_Y(h, sp_params) / h
        assert np.all(np.abs(r / sp_params.sigma_p**2 - 1) < 0.01)

    def test_monte_carlo_h120(self, sp_params):
        ini = InitialConditions([-3.0], [0.0], [float(sp_params.log_G(-3.0))])
        sc = simulate(sp_params, ini, [120], 100_000, master_seed=17)
        Y = sc.price_yields[:, 0] * 120
        v = Y.var(ddof=1)
        d = Y - Y.mean()
        se = math.sqrt(((d**4).mean() - v**2) / len(Y))
        assert abs(v - variance_Y(120, sp_params)) <= 3 * se

    def test_xi_martingale(self, sp_params):
        m, t = 20_000, 60
        rng = np.random.default_rng(3)
        Y, mu, xi, dp, ds = np.zeros(m), np.zeros(m), np.zeros(m), np.zeros(m), np.zeros(m)
        w = rng.standard_normal((3, t, m))
        oY, od = np.empty((t, m)), np.empty((t, m))
        kernels.python.simulate_chunk(Y, mu, xi, dp, ds, 0, w[0], w[1], w[2], 0.25, 0.03, 0.0,
                                      sp_params.sigma_xi, 0.03, 0.0, np.zeros(m), np.zeros(m), np.zeros(m), oY, od)
        target = t * sp_params.sigma_xi**2
        assert abs(xi.mean()) < 4 * math.sqrt(target / m)
        assert xi.var() == pytest.approx(target, rel=0.05)
        np.testing.assert_allclose(xi, sp_params.sigma_xi * w[1].sum(axis=0), rtol=1e-12, atol=1e-15)


class TestDividends:
    def test_expected_log_dp(self, sp_params):
        lg = sp_params.log_G(-3.0)
        assert expected_log_dp(37, sp_params, lg, -3.0) == pytest.approx(lg)
        assert expected_log_dp(0, sp_params, -3.5, -3.0) == -3.5

    def test_reversion_scales(self, sp_params):
        th = 0.0271
        assert math.log(2) / -math.log(1 - th) == pytest.approx(25.2, abs=0.05)
        assert 1 / th == pytest.approx(36.9, abs=0.05)
        with pytest.raises(ConstraintError):
            expected_log_dp(3, sp_params.with_(theta_div=2.5), -3.0, -3.0)

    def test_stationary_start_mean(self, sp_params):
        lg = sp_params.log_G(-3.0)
        for h in (1, 24, 120):
            m, _ = dividend_contribution_moments(h, sp_params, lg, -3.0)
            assert m == sp_params.G(-3.0)

    def test_no_dividend_noise(self, sp_params):
        p = sp_params.with_(sigma_d=0.0)
        assert dividend_contribution_moments(50, p, -5.0, -3.0)[1] == 0.0
        assert exact_dividend_moments(50, p, -5.0, -3.0)[1] == 0.0

    def test_log_dp_variance_limit(self, sp_params):
        v, _ = _dividend_kernels(2000, sp_params.theta_div, sp_params.sigma_d)
        th = sp_params.theta_div
        assert v[-1] == pytest.approx(sp_params.sigma_d**2 / (th * (2 - th)), rel=1e-12)

    def test_grid_matches_single(self, sp_params):
        hs = [12, 60, 120]
        m, v = exact_dividend_moments_grid(hs, sp_params, [-5.5, -6.0], -3.0)
        for j, h in enumerate(hs):
            a = exact_dividend_moments(h, sp_params, -6.0, -3.0)
            assert m[1, j] == pytest.approx(a[0], rel=1e-14) and v[1, j] == pytest.approx(a[1], rel=1e-12)

    def test_exact_moments_monte_carlo(self, sp_params):
        lg = float(sp_params.log_G(-3.0))
        for dp0 in (lg, lg + 0.3):
            ini = InitialConditions([-3.0], [0.0], [dp0])
            sc = simulate(sp_params, ini, [120], 100_000, master_seed=29)
            d = sc.yields[:, 0] - sc.price_yields[:, 0]
            em, ev = exact_dividend_moments(120, sp_params, dp0, -3.0)
            dv = d - d.mean()
            se_var = math.sqrt(((dv**4).mean() - d.var() ** 2) / len(d))
            assert abs(d.mean() - em) <= 3 * d.std() / math.sqrt(len(d))
            assert abs(d.var(ddof=1) - ev) <= 3 * se_var


class TestYields:
    def test_constant_forms(self, sp_params):
        p = sp_params.with_(F_linear=LinearForm(0.001, 0.0), G_linear=LinearForm(0.003, 0.0))
        assert asymptotic_yield(p, -2.0) == asymptotic_yield(p, -3.5)

    def test_published_arithmetic(self, sp_params):
        yearly = 1e-4 / 12
        p = sp_params.with_(F_linear=LinearForm(3667 * yearly, 1023 * yearly), G_linear=LinearForm(0.0, 0.0))
        assert asymptotic_yield(p, -3.0) * 12 / 1e-4 == pytest.approx(598, abs=1e-9)

    def test_affine(self, sp_params):
        a, b, c = (asymptotic_yield(sp_params, x) for x in (-3.5, -3.0, -2.0))
        assert (b - a) / 0.5 == pytest.approx((c - b) / 1.0, rel=1e-12)
        slope = sp_params.F_linear.beta + sp_params.G_linear.beta
        assert (c - a) / 1.5 == pytest.approx(slope, rel=1e-12)

    def test_leading_correction_numerical_limit(self, sp_params):
        h = 10_000
        for x0, off in ((-3.0, 0.2), (-2.6, -0.3)):
            dp0 = sp_params.log_G(x0) + off
            gap = (expected_yield(h, sp_params, x0, 0.0, dp0) - asymptotic_yield(sp_params, x0)) * h
            assert gap == pytest.approx(leading_correction(sp_params, x0, dp0), rel=1e-3)

    def test_correction_without_dividend_offset(self, sp_params):
        lg = sp_params.log_G(-3.0)
        assert leading_correction(sp_params, -3.0, lg) == pytest.approx(leading_correction(sp_params, -3.0))

    def test_calibrated_H_reduces_correction(self, sp_params):
        x_mean = -2.8
        zero_H = sp_params.with_(H_linear=LinearForm(0.0, 0.0))
        assert abs(leading_correction(sp_params, x_mean)) < abs(leading_correction(zero_H, x_mean))

    def test_damping_scale(self):
        assert damping_scale((0.25, 0.03)) == pytest.approx(23.1, abs=0.05)
        assert damping_scale((0.999, 1e-8)) > damping_scale((0.25, 0.03))

    def test_transient_halves(self, sp_params):
        p = _quiet(sp_params)
        sp = spectrum(p)
        lp, lm, k = sp.lambda_plus, sp.lambda_minus, p.kappa
        gF, H = p.growth(-3.0), p.H(-3.0)
        d = lm - lp
        secular = lambda h: gF * (h - 1) + H - gF * k / d * (lm / (1 - lm) ** 2 - lp / (1 - lp) ** 2)
        trans = lambda h: expected_Y(h, p, 3.0, 0.01) - secular(h)
        half = -math.log(2) / math.log(lp)
        r = trans(100 + half) / trans(100)
        assert r == pytest.approx(0.5, rel=1e-6)


class TestParams:
    def test_roundtrip(self, sp_params, tmp_path):
        for units in ("natural", "scaled"):
            save_params(sp_params, tmp_path / "p.txt", units)
            q = load_params(tmp_path / "p.txt")
            for key, v in params_to_dict(sp_params).items():
                assert params_to_dict(q)[key] == pytest.approx(v, rel=1e-14, abs=1e-300)
        assert "np." not in (tmp_path / "p.txt").read_text()

    def test_published_valid(self):
        for m in ("sp", "nyse"):
            published_params(m).validate()
        with pytest.raises(ConfigError):
            published_params("ftse")

    def test_missing_key(self, sp_params):
        d = params_to_dict(sp_params)
        del d["kappa"]
        with pytest.raises(ConfigError):
            params_from_dict(d)

    def test_validation(self, sp_params):
        with pytest.raises(ConstraintError):
            sp_params.with_(theta_div=0.0).validate()
        with pytest.raises(ConstraintError):
            sp_params.with_(sigma_mu=-1.0).validate()
        with pytest.raises(ConstraintError):
            sp_params.with_(G_linear=LinearForm(-1.0, 0.0)).log_G(-3.0)
