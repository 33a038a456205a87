"""Estimation of the model parameters from a market series.

Predictive coefficients come from augmented regressions of one-year yields on
lagged log EP; g, the dividend process and the momentum process from rolling
192-month regressions; sigma_p from the 1/h decay of the price-yield variance.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import optimize

from .dynamics import LinearForm, ModelParams, check_constraints, leading_correction
from .errors import ConfigError, ConstraintError, RangeError, SingularityError
from .market_data import MarketSeries, YearMonth, yield_components
from .regression import AugmentedFit, augmented_regression, augmented_regression_pairs

logger = logging.getLogger(__name__)

ROLLING_WINDOW = 192
YEARLY_E4 = 12e4  # monthly coefficient -> yearly, in units of 1e-4
RATE_E4 = 1e4


class MarketPreset(NamedTuple):
    start: YearMonth
    H_init: tuple[float, float]


MARKETS = {
    "sp": MarketPreset(YearMonth(1881, 1), (0.85, -0.85)),
    "nyse": MarketPreset(YearMonth(1926, 12), (2.62, -0.52)),
}


def market_preset(name: str) -> MarketPreset:
    try:
        return MARKETS[name]
    except KeyError:
        raise ConfigError(f"unknown market {name!r}; choose from {sorted(MARKETS)}") from None


@dataclass(frozen=True)
class RollingEstimate:
    values: np.ndarray
    mean: float
    ci68: tuple[float, float]
    window_length: int
    step: int = 1
    starts: np.ndarray = field(default=None, repr=False)  # window start indices

    @classmethod
    def from_values(cls, values, window_length: int, starts=None, step: int = 1) -> "RollingEstimate":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            raise RangeError("no admissible window")
        lo, hi = np.percentile(v, [16, 84])
        return cls(v, float(v.mean()), (float(lo), float(hi)), window_length, step,
                   None if starts is None else np.asarray(starts))

    @classmethod
    def point(cls, value: float) -> "RollingEstimate":
        v = float(value)
        return cls(np.array([v]), v, (v, v), 0, 0, None)

    def __len__(self) -> int:
        return len(self.values)

    def contains(self, value: float) -> bool:
        return self.ci68[0] <= value <= self.ci68[1]


def _start_index(series: MarketSeries, start) -> int:
    if start is None:
        ok = np.flatnonzero(np.isfinite(series.log_ep))
        if ok.size == 0:
            raise RangeError("log EP undefined everywhere")
        return int(ok[0])
    return series.index_of(start)


# ---------------------------------------------------------------------------
# Predictive regressions


@dataclass(frozen=True)
class PredictiveCoefficients:
    gross: AugmentedFit
    price: AugmentedFit
    dividend: AugmentedFit
    horizon: int
    mode: str
    first: YearMonth
    last: YearMonth

    # the fits use average monthly yields, so coefficients are monthly already
    @property
    def gross_linear(self) -> LinearForm:
        return LinearForm(self.gross.alpha_c, self.gross.beta_c)

    @property
    def F_linear(self) -> LinearForm:
        return LinearForm(self.price.alpha_c, self.price.beta_c)

    @property
    def G_linear(self) -> LinearForm:
        return LinearForm(self.dividend.alpha_c, self.dividend.beta_c)

    def table(self) -> str:
        rows = [f"predictive regressions, h={self.horizon} months, {self.mode}, {self.first}..{self.last}",
                "series       alpha(1e-4/yr)  beta(1e-4/yr)  se(beta)      t       n"]
        for name, fit in (("gross", self.gross), ("price", self.price), ("dividend", self.dividend)):
            rows.append(f"{name:<10} {fit.alpha_c * YEARLY_E4:14.1f} {fit.beta_c * YEARLY_E4:14.1f}"
                        f" {fit.beta_c_standard_error * YEARLY_E4:9.1f} {fit.t_statistic:7.2f} {fit.n:7d}")
        return "\n".join(rows) + "\n"


def predictive_sample(series: MarketSeries, horizon: int = 12, mode: str = "nonoverlapping", start=None):
    """Regression inputs for y_{t,h} on log EP_t.

    Non-overlapping: months t_0, t_0+h, ...; returns x (K+1 values) and the
    three yield components (K values each), chained as x_{k-1} -> y_k.
    Overlapping: every month; returns (x_prev, x_next, x_level) and yields.
    """
    if horizon < 1:
        raise ConfigError("horizon must be positive")
    i0 = _start_index(series, start)
    total, price, div = yield_components(series, horizon)
    x = series.log_ep
    n = len(series)
    if mode == "nonoverlapping":
        t = np.arange(i0, n - horizon, horizon)
        ok = np.isfinite(total[t]) & np.isfinite(x[t]) & np.isfinite(x[t + horizon])
        if not ok.all():
            # the chained regressor must be gap-free
            raise RangeError(f"log EP or yields undefined at {series.dates[int(t[~ok][0])]}; "
                             "start after the CAPE warm-up")
        if len(t) < 3:
            raise RangeError(f"only {len(t)} non-overlapping {horizon}-month periods")
        xs = np.append(x[t], x[t[-1] + horizon])
        return t, xs, (total[t], price[t], div[t])
    if mode == "overlapping":
        t = np.arange(i0, n - horizon)
        t = t[np.isfinite(total[t]) & np.isfinite(x[t]) & np.isfinite(x[t + horizon])]
        if len(t) < 3:
            raise RangeError("too few overlapping periods")
        return t, (x[t], x[t + horizon], x[t[0]:t[-1] + horizon + 1]), (total[t], price[t], div[t])
    raise ConfigError(f"mode must be 'overlapping' or 'nonoverlapping', got {mode!r}")


def estimate_predictive_coefficients(series: MarketSeries, horizon: int = 12, mode: str = "nonoverlapping",
                                     start=None) -> PredictiveCoefficients:
    t, xs, ys = predictive_sample(series, horizon, mode, start)
    fits = []
    for y in ys:
        if mode == "nonoverlapping":
            fits.append(augmented_regression(y, xs))
        else:
            fits.append(augmented_regression_pairs(y, xs[0], xs[1], xs[2]))
    last = series.dates[int(t[-1]) + horizon]
    return PredictiveCoefficients(*fits, horizon, mode, series.dates[int(t[0])], last)


# ---------------------------------------------------------------------------
# Rolling regressions


def _window_starts(valid: np.ndarray, i0: int, window: int) -> np.ndarray:
    """Starts s >= i0 whose whole window [s, s + window) is valid."""
    if len(valid) - i0 < window:
        return np.array([], dtype=np.int64)
    full = sliding_window_view(valid[i0:], window).all(axis=1)
    return i0 + np.flatnonzero(full)


def estimate_g(series: MarketSeries, window: int = ROLLING_WINDOW, start=None) -> RollingEstimate:
    """Rolling OLS slope of log <e>_t on t over ``window`` months."""
    i0 = _start_index(series, start)
    cape = series.cape
    defined = np.isfinite(cape)
    valid = defined & (np.where(defined, cape, 1.0) > 0)
    n_bad = int(np.count_nonzero(defined[i0:] & ~valid[i0:]))
    if n_bad:
        logger.info("%d months with non-positive average earnings; windows covering them are skipped", n_bad)
    starts = _window_starts(valid, i0, window)
    if starts.size == 0:
        raise RangeError(f"need at least {window} months of positive CAPE earnings")
    tau = np.arange(window, dtype=float)
    tau -= tau.mean()
    le = np.log(np.where(valid, cape, 1.0))
    slopes = sliding_window_view(le, window)[starts] @ tau / (tau @ tau)
    return RollingEstimate.from_values(slopes, window, starts)


@dataclass(frozen=True)
class DividendEstimate:
    theta_div: RollingEstimate
    sigma_d2: RollingEstimate


def estimate_dividend_process(series: MarketSeries, log_G: Callable[[float], float] | LinearForm,
                              window: int = ROLLING_WINDOW, start=None) -> DividendEstimate:
    """Rolling no-intercept OLS of z_{t+1} - z_t on z_t - log G, z_t = d_{t-1} - p_t.

    ``log_G`` maps the window-start log EP to log G; a :class:`LinearForm`
    is taken to be G itself and logged. theta = -slope, sigma_d^2 = residual
    variance.
    """
    if isinstance(log_G, LinearForm):
        G_form = log_G

        def log_G(x):
            return math.log(G_form(x)) if G_form(x) > 0 else math.nan

    i0 = _start_index(series, start)
    z = series.log_dp
    x = series.log_ep
    valid = np.isfinite(z) & np.isfinite(x)
    starts = _window_starts(valid, i0, window)
    thetas, sig2, kept = [], [], []
    for s in starts:
        lg = log_G(x[s])
        if not np.isfinite(lg):
            logger.info("G not positive at window start %s; window skipped", series.dates[s])
            continue
        zw = z[s:s + window]
        dev = zw[:-1] - lg
        dz = np.diff(zw)
        sxx = dev @ dev
        if sxx == 0:
            continue
        b = (dev @ dz) / sxx
        r = dz - b * dev
        thetas.append(-b)
        sig2.append(r @ r / (len(r) - 1))
        kept.append(s)
    if not kept:
        raise RangeError("no admissible window for the dividend regression")
    return DividendEstimate(RollingEstimate.from_values(thetas, window, kept),
                            RollingEstimate.from_values(sig2, window, kept))


@dataclass(frozen=True)
class MomentumEstimate:
    gamma: RollingEstimate
    kappa: RollingEstimate
    sigma_mu2: RollingEstimate
    H_linear: LinearForm
    iterations: int
    converged: bool
    projected: bool
    mean_log_ep: float


def momentum_regressions(series: MarketSeries, g: float, F_linear: LinearForm, H_linear: LinearForm,
                         window: int = ROLLING_WINDOW, start=None):
    """Per-window (gamma, kappa, sigma_mu^2) from

        mu_{t+1} = gamma mu_t + kappa (x_t + H + (g(1+F) - g) tau) + e_t,

    with mu_t = p_t - p_{t-1}, tau months since the window start and F, H frozen
    at the window-start log EP. Returns (starts, gamma, kappa, sigma_mu2).
    """
    i0 = max(_start_index(series, start), 1)
    mu = series.mu_proxy
    x = series.log_ep
    valid = np.isfinite(mu) & np.isfinite(x)
    starts = _window_starts(valid, i0, window)
    if starts.size == 0:
        raise RangeError(f"need {window} months with log EP and price changes")
    F = LinearForm(*F_linear)
    H = LinearForm(*H_linear)
    tau = np.arange(window - 1, dtype=float)
    M = sliding_window_view(mu, window)[starts]
    X = sliding_window_view(x, window)[starts, :-1]
    x0 = x[starts]
    R = X + H(x0)[:, None] + (F(x0) - g)[:, None] * tau[None, :]
    m0, m1 = M[:, :-1], M[:, 1:]
    s11 = np.einsum("ij,ij->i", m0, m0)
    s12 = np.einsum("ij,ij->i", m0, R)
    s22 = np.einsum("ij,ij->i", R, R)
    b1 = np.einsum("ij,ij->i", m0, m1)
    b2 = np.einsum("ij,ij->i", R, m1)
    det = s11 * s22 - s12 * s12
    if np.any(np.abs(det) <= 1e-12 * s11 * s22):
        raise SingularityError("momentum regressors are collinear in some window")
    gamma = (s22 * b1 - s12 * b2) / det
    kappa = (s11 * b2 - s12 * b1) / det
    resid = m1 - gamma[:, None] * m0 - kappa[:, None] * R
    sig2 = np.einsum("ij,ij->i", resid, resid) / (window - 1 - 2)
    return starts, gamma, kappa, sig2


def project_constraints(gamma: float, kappa: float, margin: float = 1e-6) -> tuple[float, float, bool]:
    """Nearest point of 0 < gamma < 1, 0 < kappa <= (1 - gamma)^2 / 4, pulled
    ``margin`` inside. Returns (gamma, kappa, moved)."""
    try:
        check_constraints(gamma, kappa)
        return gamma, kappa, False
    except ConstraintError:
        pass
    if kappa <= 0 or not 0 < gamma < 1:
        g2 = min(max(gamma, margin), 1 - margin)
        k2 = min(max(kappa, margin), (1 - g2) ** 2 / 4 * (1 - margin))
        if k2 == kappa and g2 == gamma:
            return g2, k2, False
        return g2, k2, True

    def dist(gm):
        return (gm - gamma) ** 2 + ((1 - gm) ** 2 / 4 - kappa) ** 2

    res = optimize.minimize_scalar(dist, bounds=(margin, 1 - margin), method="bounded",
                                   options={"xatol": 1e-12})
    g2 = float(res.x)
    return g2, (1 - g2) ** 2 / 4 * (1 - margin), True


def _golden(f, x0: float, half_width: float = 1.0) -> float:
    """Golden-section minimum of ``f`` searched from a bracket around ``x0``."""
    try:
        res = optimize.minimize_scalar(f, bracket=(x0 - half_width, x0 + half_width), method="golden",
                                       options={"xtol": 1e-10})
        return float(res.x) if f(res.x) <= f(x0) else x0
    except (ValueError, RuntimeError):
        return x0


def estimate_momentum(series: MarketSeries, g: float, F_linear: LinearForm, H_init: tuple[float, float],
                      G_linear: LinearForm | None = None, theta_div: float | None = None,
                      window: int = ROLLING_WINDOW, start=None, tol: float = 1e-6,
                      max_iter: int = 50) -> MomentumEstimate:
    """Fixed point between the momentum regressions and the choice of H.

    Each pass estimates (gamma, kappa, sigma_mu^2) with the current H, then
    moves (alpha_H, beta_H) by alternating golden-section searches that
    minimize |leading correction| at the sample-mean log EP. The dividend term
    enters only when ``G_linear`` and ``theta_div`` are given. Stops when
    gamma and kappa change by less than ``tol``.
    """
    H = LinearForm(*H_init)
    F = LinearForm(*F_linear)
    x = series.log_ep
    i0 = max(_start_index(series, start), 1)
    xbar = float(np.nanmean(x[i0:]))
    dpbar = None
    with_div = G_linear is not None and theta_div is not None and G_linear(xbar) > 0
    if with_div:
        dpbar = float(np.nanmean(series.log_dp[i0:]))

    prev = None
    converged = projected = False
    it = 0
    for it in range(1, max_iter + 1):
        starts, gam, kap, sig2 = momentum_regressions(series, g, F, H, window, start)
        gm, km = float(gam.mean()), float(kap.mean())
        gp, kp, moved = project_constraints(gm, km)
        if moved:
            logger.warning("momentum estimates (gamma=%.4g, kappa=%.4g) violate 4 kappa <= (1-gamma)^2; "
                           "projected to (%.4g, %.4g)", gm, km, gp, kp)
        projected = moved
        if prev is not None and abs(gm - prev[0]) < tol and abs(km - prev[1]) < tol:
            converged = True
            break
        prev = (gm, km)

        base = ModelParams(gp, kp, 0.0, 0.0, g, F, G_linear or LinearForm(1.0, 0.0), H,
                           theta_div if with_div else 0.5, 0.0)

        def objective(a, b):
            return abs(leading_correction(base.with_(H_linear=LinearForm(a, b)), xbar, dpbar))

        a = _golden(lambda v: objective(v, H.beta), H.alpha)
        b = _golden(lambda v: objective(a, v), H.beta)
        H = LinearForm(a, b)

    starts, gam, kap, sig2 = momentum_regressions(series, g, F, H, window, start)
    if not converged:
        logger.warning("momentum fixed point did not converge in %d iterations", max_iter)
    return MomentumEstimate(
        RollingEstimate.from_values(gam, window, starts),
        RollingEstimate.from_values(kap, window, starts),
        RollingEstimate.from_values(sig2, window, starts),
        H, it, converged, projected, xbar,
    )


@dataclass(frozen=True)
class SigmaPFit:
    sigma_p2: float
    horizons: np.ndarray
    variances: np.ndarray
    counts: np.ndarray


def estimate_sigma_p(series: MarketSeries, horizons=range(24, 193), mode: str = "overlapping",
                     start=None) -> SigmaPFit:
    """Through-origin slope of Var[(p_{t+h} - p_t)/h] against 1/h."""
    hs = np.asarray(list(horizons), dtype=np.int64)
    if len(np.unique(hs)) < 3:
        raise RangeError("need at least 3 horizons to fit the 1/h decay")
    if mode not in ("overlapping", "nonoverlapping"):
        raise ConfigError(f"mode must be 'overlapping' or 'nonoverlapping', got {mode!r}")
    i0 = _start_index(series, start)
    p = series.log_price
    n = len(p)
    used, var, cnt = [], [], []
    for h in hs:
        step = int(h) if mode == "nonoverlapping" else 1
        t = np.arange(i0, n - h, step)
        if len(t) < 2:
            logger.info("horizon %d: too few periods, dropped", h)
            continue
        r = (p[t + h] - p[t]) / h
        used.append(int(h))
        var.append(float(np.var(r, ddof=1)))
        cnt.append(len(t))
    if len(used) < 3:
        raise RangeError("fewer than 3 horizons fit in the sample")
    inv = 1.0 / np.array(used, dtype=float)
    v = np.array(var)
    slope = float(inv @ v / (inv @ inv))
    return SigmaPFit(slope, np.array(used), v, np.array(cnt))


# ---------------------------------------------------------------------------
# Full calibration


@dataclass(frozen=True)
class CalibrationReport:
    predictive: PredictiveCoefficients
    g: RollingEstimate
    theta_div: RollingEstimate
    sigma_d2: RollingEstimate
    gamma: RollingEstimate
    kappa: RollingEstimate
    sigma_mu2: RollingEstimate
    sigma_p2: RollingEstimate
    H_linear: LinearForm
    momentum: MomentumEstimate = field(repr=False)
    sigma_p_fit: SigmaPFit = field(repr=False)

    @property
    def F_linear(self) -> LinearForm:
        return self.predictive.F_linear

    @property
    def G_linear(self) -> LinearForm:
        return self.predictive.G_linear

    @property
    def gross_linear(self) -> LinearForm:
        return self.predictive.gross_linear

    def to_params(self) -> ModelParams:
        """Point estimates; (gamma, kappa) projected into the admissible region if needed."""
        gm, km, _ = project_constraints(self.gamma.mean, self.kappa.mean)
        th = min(max(self.theta_div.mean, 1e-6), 2 - 1e-6)
        return ModelParams(
            gamma=gm,
            kappa=km,
            sigma_mu=math.sqrt(max(self.sigma_mu2.mean, 0.0)),
            sigma_p=math.sqrt(max(self.sigma_p2.mean, 0.0)),
            g=self.g.mean,
            F_linear=self.F_linear,
            G_linear=self.G_linear,
            H_linear=self.H_linear,
            theta_div=th,
            sigma_d=math.sqrt(max(self.sigma_d2.mean, 0.0)),
        ).validate()

    def table(self, predictive: bool = True) -> str:
        """Rates per month in 1e-4 (gamma unitless) with 68% intervals."""
        rows = ["parameter      value       ci68_low    ci68_high   windows"]
        for name, est, scale in (("gamma", self.gamma, 1.0), ("kappa", self.kappa, RATE_E4),
                                 ("g", self.g, RATE_E4), ("theta_div", self.theta_div, RATE_E4),
                                 ("sigma_mu2", self.sigma_mu2, RATE_E4), ("sigma_p2", self.sigma_p2, RATE_E4),
                                 ("sigma_d2", self.sigma_d2, RATE_E4)):
            rows.append(f"{name:<12} {est.mean * scale:11.4f} {est.ci68[0] * scale:11.4f}"
                        f" {est.ci68[1] * scale:11.4f} {len(est):9d}")
        rows.append(f"alpha_H = {self.H_linear.alpha:.4f}, beta_H = {self.H_linear.beta:.4f}")
        head = self.predictive.table() if predictive else ""
        return head + "\n".join(rows) + "\n"


def calibrate(series: MarketSeries, market: str | None = "sp", start=None, H_init=None,
              window: int = ROLLING_WINDOW, horizon: int = 12, mode: str = "nonoverlapping",
              sigma_p_horizons=range(24, 193), sigma_p_mode: str = "overlapping") -> CalibrationReport:
    """Run every estimator in order: F and G, g, dividend process, momentum, sigma_p."""
    if market is not None:
        preset = market_preset(market)
        start = preset.start if start is None else start
        H_init = preset.H_init if H_init is None else H_init
    if H_init is None:
        raise ConfigError("H_init is required when no market preset is given")
    if start is not None:
        start = YearMonth(*start)
        if start.index() < series.dates[0].index():
            start = None
    pred = estimate_predictive_coefficients(series, horizon, mode, start)
    g = estimate_g(series, window, start)
    div = estimate_dividend_process(series, pred.G_linear, window, start)
    mom = estimate_momentum(series, g.mean, pred.F_linear, H_init, pred.G_linear, div.theta_div.mean,
                            window, start)
    sp = estimate_sigma_p(series, sigma_p_horizons, sigma_p_mode, start)
    return CalibrationReport(pred, g, div.theta_div, div.sigma_d2, mom.gamma, mom.kappa, mom.sigma_mu2,
                             RollingEstimate.point(sp.sigma_p2), mom.H_linear, mom, sp)
