"""Synthetic data with known parameters, for oracles and self-consistency checks."""
from __future__ import annotations

import math

import numpy as np

from .dynamics import ModelParams, ModelState, step
from .market_data import CAPE_WINDOW, MarketSeries, RawMonthlyRecord, YearMonth, deflate


def predictive_system(n: int, reps: int = 1, alpha=0.0, beta=0.0, theta=0.0, rho=0.95,
                      sigma_u=1.0, sigma_v=1.0, corr=-0.9, rng=None):
    """Draw (y, x) from y_t = alpha + beta x_{t-1} + u_t, x_t = theta + rho x_{t-1} + v_t.

    Returns y with shape (reps, n) and x with shape (reps, n + 1); x_0 comes
    from the stationary distribution when |rho| < 1 and is theta otherwise.
    """
    rng = np.random.default_rng(rng)
    z = rng.standard_normal((2, reps, n))
    u = sigma_u * z[0]
    v = sigma_v * (corr * z[0] + math.sqrt(1 - corr * corr) * z[1])
    x = np.empty((reps, n + 1))
    if abs(rho) < 1:
        x[:, 0] = theta / (1 - rho) + sigma_v / math.sqrt(1 - rho * rho) * rng.standard_normal(reps)
    else:
        x[:, 0] = theta
    for t in range(n):
        x[:, t + 1] = theta + rho * x[:, t] + v[:, t]
    y = alpha + beta * x[:, :-1] + u
    return y, x


def market_records(params: ModelParams, n_months: int, seed: int = 0, log_ep0: float = -2.9,
                   log_dp0: float | None = None, mu0: float = 0.0, start=(1871, 1),
                   earnings_noise: float = 0.0, window: int = CAPE_WINDOW) -> list[RawMonthlyRecord]:
    """A monthly price/dividend/earnings history generated by the model.

    Real earnings grow at ``params.g`` (plus optional i.i.d. log noise). The
    model starts once the first CAPE is defined, with log EP = ``log_ep0``;
    earlier prices grow deterministically at g. CPI is constant, so nominal
    equals real. D and E are written annualized, as in the usual source files.
    """
    if n_months <= window:
        raise ValueError("need more months than the CAPE window")
    rng = np.random.default_rng(seed)
    k = np.arange(n_months, dtype=float)
    log_e = params.g * k + earnings_noise * rng.standard_normal(n_months)
    e = np.exp(log_e)
    k0 = window - 1
    ebar0 = e[:window].mean()
    ref = math.log(ebar0)  # log <e>_0 at the model's start month
    lg = params.log_G(log_ep0)
    if log_dp0 is None:
        log_dp0 = lg

    p = np.empty(n_months)
    z = np.full(n_months, lg)
    state = ModelState.initial(log_ep0, mu0, log_dp0)
    p[k0] = ref + state.Y
    z[k0] = log_dp0
    noise = rng.standard_normal((n_months, 3))
    for i in range(k0 + 1, n_months):
        state = step(state, params, noise[i])
        p[i] = ref + state.Y
        z[i] = state.log_dp
    p[:k0] = p[k0] + params.g * (k[:k0] - k0)

    P = np.exp(p)
    D = np.empty(n_months)
    D[:-1] = P[1:] * np.exp(z[1:])  # z_{t+1} = d_t - p_{t+1}
    D[-1] = P[-1] * math.exp(lg)
    first = YearMonth(*start)
    return [RawMonthlyRecord(first.shift(i), float(P[i]), 12.0 * float(D[i]), 12.0 * float(e[i]), 1.0)
            for i in range(n_months)]


def market_series(params: ModelParams, n_months: int, seed: int = 0, **kw) -> MarketSeries:
    return deflate(market_records(params, n_months, seed, **kw))


def valuation_history(params: ModelParams, n_months: int, seed: int = 0, mean_log_ep: float = -2.85,
                      sd_log_ep: float = 0.3, rho: float = 0.99, mu_mean: float = 0.002,
                      mu_sd: float = 0.04):
    """Stationary stand-in for an empirical sequence of starting values.

    log EP is a Gaussian AR(1) around ``mean_log_ep``, clipped at 3 sd; the monthly price change
    is i.i.d. normal; log DP follows the dividend process toward log G(log EP_t).
    Returns arrays (log_ep, mu, log_dp) of length ``n_months``.
    """
    rng = np.random.default_rng(seed)
    x = np.empty(n_months)
    x[0] = mean_log_ep + sd_log_ep * rng.standard_normal()
    innov = sd_log_ep * math.sqrt(1 - rho * rho)
    for t in range(1, n_months):
        x[t] = mean_log_ep + rho * (x[t - 1] - mean_log_ep) + innov * rng.standard_normal()
    x = np.clip(x, mean_log_ep - 3 * sd_log_ep, mean_log_ep + 3 * sd_log_ep)  # keep G(log EP) > 0
    lg = params.log_G(x)
    z = np.empty(n_months)
    z[0] = lg[0]
    for t in range(1, n_months):
        z[t] = z[t - 1] - params.theta_div * (z[t - 1] - lg[t]) + params.sigma_d * rng.standard_normal()
    mu = mu_mean + mu_sd * rng.standard_normal(n_months)
    return x, mu, z
