import math

import numpy as np
import pytest

from cape_returns.calibration import (
    RollingEstimate,
    calibrate,
    estimate_dividend_process,
    estimate_g,
    estimate_momentum,
    estimate_predictive_coefficients,
    estimate_sigma_p,
    market_preset,
    momentum_regressions,
    predictive_sample,
    project_constraints,
)
from cape_returns.dynamics import LinearForm, check_constraints, published_params
from cape_returns.errors import ConfigError, RangeError
from cape_returns.market_data import YearMonth, build_series
from cape_returns.synthetic import market_series

START = YearMonth(1871, 1)


def _dates(n):
    return [START.shift(i) for i in range(n)]


def _series(P, D=None, E=None, log_ep=None):
    n = len(P)
    D = np.full(n, 0.01) if D is None else D
    E = np.full(n, 1.0) if E is None else E
    dates = _dates(n)
    override = None if log_ep is None else dict(zip(dates, log_ep))
    return build_series(dates, P, D, E, dates[-1], log_ep_override=override)


def test_exponential_earnings_give_exact_g():
    n, g0 = 600, 0.0015
    k = np.arange(n)
    s = _series(np.exp(0.001 * k + 3), E=np.exp(g0 * k))
    est = estimate_g(s)
    assert np.allclose(est.values, g0, rtol=1e-9)
    # windows start once CAPE exists (month 120) and need 192 months
    assert len(est) == n - 119 - 192 + 1


def test_window_count_skips_nonpositive_cape():
    n = 700
    E = np.full(n, 1.0)
    E[300:305] = -500.0  # drags the 10-year average below zero for a stretch
    s = _series(np.full(n, 20.0), E=E)
    valid = np.isfinite(s.cape) & (np.nan_to_num(s.cape, nan=-1.0) > 0)
    expected = sum(valid[i:i + 192].all() for i in range(n - 191))
    assert len(estimate_g(s)) == expected
    assert expected < n - 119 - 191


def test_dividend_process_recovers_theta():
    rng = np.random.default_rng(2)
    n, th, sd, lg = 1700, 0.03, 0.04, math.log(0.003)
    z = np.empty(n)
    z[0] = lg
    for t in range(1, n):
        z[t] = z[t - 1] - th * (z[t - 1] - lg) + sd * rng.standard_normal()
    P = 50 * np.exp(np.cumsum(rng.normal(0.001, 0.04, n)))
    D = np.empty(n)
    D[:-1] = P[1:] * np.exp(z[1:])  # z_t = d_{t-1} - p_t
    D[-1] = D[-2]
    s = _series(P, D=D)
    est = estimate_dividend_process(s, lambda x: lg, start=s.dates[1])
    assert est.theta_div.contains(th)
    assert est.sigma_d2.contains(sd**2)
    assert est.theta_div.ci68[0] <= est.theta_div.ci68[1]


def test_sigma_p_random_walk():
    rng = np.random.default_rng(4)
    s2 = 0.0018
    p = np.cumsum(rng.normal(0, math.sqrt(s2), 6000))
    s = _series(np.exp(p))
    fit = estimate_sigma_p(s, range(24, 193), start=s.dates[0])
    assert fit.sigma_p2 == pytest.approx(s2, rel=0.15)


def test_sigma_p_needs_three_horizons():
    s = _series(np.exp(np.linspace(0, 1, 400)))
    with pytest.raises(RangeError):
        estimate_sigma_p(s, [24, 48], start=s.dates[0])


def test_predictive_coefficients_recovered():
    rng = np.random.default_rng(6)
    years, h = 140, 12
    xa = np.empty(years + 1)
    xa[0] = -2.9
    for k in range(years):
        xa[k + 1] = -2.9 * 0.05 + 0.95 * xa[k] + 0.15 * rng.standard_normal()
    x = np.repeat(xa, h)[: years * h + 1]
    aF, bF, aG, bG = 0.01, 0.003, 0.006, 0.0012
    n = len(x)
    p = np.zeros(n)
    for t in range(n - 1):
        p[t + 1] = p[t] + aF + bF * x[t] + 0.04 * rng.standard_normal()
    P = 100 * np.exp(p)
    D = np.empty(n)
    D[:-1] = P[1:] * np.expm1(aG + bG * x[:-1] + 1e-4 * rng.standard_normal(n - 1))
    D[-1] = D[-2]
    s = _series(P, D=D, log_ep=x)
    pred = estimate_predictive_coefficients(s, h, "nonoverlapping", start=s.dates[0])
    assert abs(pred.price.beta_c - bF) <= 2 * pred.price.beta_c_standard_error
    assert abs(pred.dividend.beta_c - bG) <= 2 * pred.dividend.beta_c_standard_error
    assert pred.gross.n == years
    assert "alpha(1e-4/yr)" in pred.table()


def test_predictive_sample_modes():
    s = market_series(published_params("sp"), 600, seed=1)
    t, xs, ys = predictive_sample(s, 12, "nonoverlapping")
    assert len(xs) == len(t) + 1 and np.all(np.diff(t) == 12)
    t2, (xp, xn, lvl), ys2 = predictive_sample(s, 12, "overlapping")
    assert np.all(np.diff(t2) == 1) and len(xp) == len(ys2[0])
    with pytest.raises(ConfigError):
        predictive_sample(s, 12, "weekly")
    with pytest.raises(RangeError):
        predictive_sample(s, 12, "nonoverlapping", start=s.dates[0])


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_momentum_recovery(seed):
    base = published_params("sp")
    g = base.g
    p = base.with_(gamma=0.2, kappa=0.02, F_linear=LinearForm(g, 0.0), H_linear=LinearForm(0.3, 0.0),
                   sigma_p=0.001)
    s = market_series(p, 1200, seed=seed, log_ep0=-3.0)
    starts, gm, k, s2 = momentum_regressions(s, g, p.F_linear, p.H_linear, 192, start=s.dates[119])
    assert RollingEstimate.from_values(gm, 192).contains(0.2)
    assert RollingEstimate.from_values(k, 192).contains(0.02)
    assert len(starts) == 1200 - 119 - 192 + 1


def test_momentum_fixed_point_converges():
    p = published_params("sp")
    s = market_series(p, 1500, seed=5, log_ep0=-2.9)
    est = estimate_momentum(s, p.g, p.F_linear, (0.85, -0.85), p.G_linear, p.theta_div, start=s.dates[119])
    assert est.converged and est.iterations <= 50
    check_constraints(*project_constraints(est.gamma.mean, est.kappa.mean)[:2])


def test_projection():
    assert project_constraints(0.25, 0.03) == (0.25, 0.03, False)
    g2, k2, moved = project_constraints(0.5, 0.2)
    assert moved
    check_constraints(g2, k2)
    g3, k3, moved = project_constraints(1.3, -0.1)
    assert moved
    check_constraints(g3, k3)


def test_presets():
    assert market_preset("sp").H_init == (0.85, -0.85)
    assert market_preset("nyse").H_init == (2.62, -0.52)
    with pytest.raises(ConfigError):
        market_preset("dax")


_TRUE = {"g": lambda p: p.g, "theta_div": lambda p: p.theta_div, "sigma_d2": lambda p: p.sigma_d**2,
         "gamma": lambda p: p.gamma, "kappa": lambda p: p.kappa, "sigma_mu2": lambda p: p.sigma_mu**2}


@pytest.fixture(scope="module")
def round_trip_reports():
    p = published_params("sp")
    reps = []
    for seed in range(4):
        s = market_series(p, 1704, seed=seed, log_ep0=-2.9)
        reps.append(calibrate(s, market=None, H_init=(0.85, -0.85), start=s.dates[119]))
    return p, reps


@pytest.mark.parametrize("name", [
    "g", "theta_div", "sigma_d2", "gamma", "sigma_mu2",
    pytest.param("kappa", marks=pytest.mark.xfail(
        reason="rolling windows refreeze F and H at each start and the price-change proxy lags one month; "
               "kappa comes out biased low on model paths", strict=False)),
])
def test_round_trip(round_trip_reports, name):
    p, reps = round_trip_reports
    hits = [getattr(r, name).contains(_TRUE[name](p)) for r in reps]
    assert sum(hits) >= len(reps) / 2


def test_report_params_satisfy_constraints(round_trip_reports):
    _, reps = round_trip_reports
    for r in reps:
        q = r.to_params()
        check_constraints(q.gamma, q.kappa)
        assert 0 < q.theta_div < 2
        assert "kappa" in r.table()
