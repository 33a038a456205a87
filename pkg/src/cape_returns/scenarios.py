"""Monte Carlo yield scenarios and their analytical confidence bands."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dynamics import (
    ModelParams,
    asymptotic_yield,
    exact_dividend_moments_grid,
    dividend_contribution_moments,
    expected_Y,
    leading_correction,
    variance_Y,
)
from .errors import ConfigError, DataError, RangeError
from .market_data import MarketSeries, yield_components

logger = logging.getLogger(__name__)

DEFAULT_HORIZONS = tuple(range(24, 193))
PATH_BLOCK = 4096  # paths per random stream
TIME_CHUNK = 256  # months of noise drawn at once


def _horizons(horizons) -> np.ndarray:
    h = np.unique(np.asarray(list(horizons), dtype=np.int64))
    if h.size == 0:
        raise ConfigError("horizon grid is empty")
    if h[0] < 1:
        raise ConfigError("horizons must be positive")
    return h


@dataclass(frozen=True)
class InitialConditions:
    """Per-scenario starting values; Y_0 = -log EP_0."""

    log_ep0: np.ndarray
    mu0: np.ndarray
    log_dp0: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        arrs = np.broadcast_arrays(*(np.atleast_1d(np.asarray(a, dtype=float))
                                     for a in (self.log_ep0, self.mu0, self.log_dp0)))
        for name, a in zip(("log_ep0", "mu0", "log_dp0"), arrs):
            if not np.all(np.isfinite(a)):
                raise DataError(f"non-finite {name} in initial conditions")
            object.__setattr__(self, name, np.array(a))
        if not self.labels:
            object.__setattr__(self, "labels", tuple(str(i) for i in range(len(arrs[0]))))
        if len(self.labels) != len(arrs[0]):
            raise ConfigError("one label per initial condition")

    def __len__(self) -> int:
        return len(self.log_ep0)

    @property
    def Y0(self) -> np.ndarray:
        return -self.log_ep0

    @classmethod
    def explicit(cls, log_ep0, mu0=0.0, log_dp0=None) -> "InitialConditions":
        if log_dp0 is None:
            raise ConfigError("log_dp0 is required")
        return cls(log_ep0, mu0, log_dp0)

    @classmethod
    def from_series(cls, series: MarketSeries, start=None, end=None, horizon: int = 0) -> "InitialConditions":
        """Empirical (log EP_t, p_t - p_{t-1}, log DP_t) for every usable month.

        Months from ``start`` (default: first with all three defined) through
        ``end``, further limited so that ``t + horizon`` stays in the sample
        when ``horizon`` > 0.
        """
        idx = usable_months(series, start, end, horizon)
        labels = tuple(str(series.dates[i]) for i in idx)
        return cls(series.log_ep[idx], series.mu_proxy[idx], series.log_dp[idx], labels)


def usable_months(series: MarketSeries, start=None, end=None, horizon: int = 0) -> np.ndarray:
    """Indices of months that can start a scenario (see :meth:`InitialConditions.from_series`)."""
    n = len(series)
    ok = np.isfinite(series.log_ep) & np.isfinite(series.mu_proxy) & np.isfinite(series.log_dp)
    lo = series.index_of(start) if start is not None else 0
    hi = series.index_of(end) + 1 if end is not None else n
    if horizon > 0:
        hi = min(hi, n - horizon)  # y_{t,h} uses H_t..H_{t+h-1}, defined up to n - 2
    mask = np.zeros(n, dtype=bool)
    mask[lo:max(hi, lo)] = True
    idx = np.flatnonzero(ok & mask)
    if idx.size == 0:
        raise RangeError("no month with log EP, mu proxy and log DP all defined in range")
    return idx


@dataclass(frozen=True)
class ScenarioSet:
    horizons: np.ndarray
    yields: np.ndarray  # (paths, horizons) gross yields
    price_yields: np.ndarray  # (p_h - p_0) / h
    scenario: np.ndarray  # index into ``initial`` for each path
    initial: InitialConditions
    master_seed: int
    params: ModelParams = field(repr=False)

    @property
    def n_paths(self) -> int:
        return self.yields.shape[0]

    def log_ep0(self) -> np.ndarray:
        return self.initial.log_ep0[self.scenario]

    def write_csv(self, path) -> None:
        """Long format: path, scenario, start, horizon, logEP0, yield, price_yield."""
        ep = self.log_ep0()
        with open(path, "w") as fh:
            fh.write("path,scenario,start,horizon,logEP0,yield,price_yield\n")
            for k in range(self.n_paths):
                s = self.scenario[k]
                lab = self.initial.labels[s]
                for j, h in enumerate(self.horizons):
                    fh.write(f"{k},{s},{lab},{h},{float(ep[k])!r},{float(self.yields[k, j])!r},"
                             f"{float(self.price_yields[k, j])!r}\n")


def block_generator(master_seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(block,))))


def simulate(params: ModelParams, initial: InitialConditions, horizons=DEFAULT_HORIZONS,
             paths_per_scenario: int = 1, master_seed: int = 0) -> ScenarioSet:
    """Simulate the joint price/dividend system from each initial condition.

    Paths are laid out scenario-major (all paths of scenario 0 first). Each block
    of ``PATH_BLOCK`` paths has its own random stream, so results depend only on
    ``master_seed`` and the path layout.
    """
    params.validate()
    hs = _horizons(horizons)
    if paths_per_scenario < 1:
        raise ConfigError("paths_per_scenario must be >= 1")
    scen = np.repeat(np.arange(len(initial)), paths_per_scenario)
    n_paths = len(scen)
    ep0 = initial.log_ep0[scen]
    H_all = np.asarray(params.H(ep0), dtype=float)
    gF_all = np.asarray(params.growth(ep0), dtype=float)
    lg_all = np.asarray(params.log_G(ep0), dtype=float)
    hmax = int(hs[-1])
    want = np.zeros(hmax + 1, dtype=np.int64) - 1
    want[hs] = np.arange(len(hs))

    yields = np.empty((n_paths, len(hs)))
    price = np.empty((n_paths, len(hs)))
    for b, lo in enumerate(range(0, n_paths, PATH_BLOCK)):
        hi = min(lo + PATH_BLOCK, n_paths)
        m = hi - lo
        rng = block_generator(master_seed, b)
        s = scen[lo:hi]
        Y0 = initial.Y0[s]
        Y = Y0.copy()
        mu = initial.mu0[s].copy()
        xi = np.zeros(m)
        dp = initial.log_dp0[s].copy()
        divsum = np.zeros(m)
        H = np.ascontiguousarray(H_all[lo:hi])
        gF = np.ascontiguousarray(gF_all[lo:hi])
        lg = np.ascontiguousarray(lg_all[lo:hi])
        t = 0
        while t < hmax:
            steps = min(TIME_CHUNK, hmax - t)
            w = rng.standard_normal((3, steps, m))
            oY = np.empty((steps, m))
            od = np.empty((steps, m))
            kernels.simulate_chunk(Y, mu, xi, dp, divsum, t, w[0], w[1], w[2],
                                   params.gamma, params.kappa, params.sigma_mu, params.sigma_xi,
                                   params.theta_div, params.sigma_d, H, gF, lg, oY, od)
            hrange = np.arange(t + 1, t + steps + 1)
            sel = want[hrange] >= 0
            for hh, row in zip(hrange[sel], np.flatnonzero(sel)):
                j = want[hh]
                price[lo:hi, j] = (oY[row] - Y0) / hh
                yields[lo:hi, j] = price[lo:hi, j] + od[row] / hh
            t += steps
    if not (np.all(np.isfinite(yields)) and np.all(np.isfinite(price))):
        raise DataError("simulation produced non-finite yields")
    return ScenarioSet(hs, yields, price, scen, initial, master_seed, params)


@dataclass(frozen=True)
class ConfidenceBand:
    horizons: np.ndarray
    center: np.ndarray  # (..., horizons)
    half_width: np.ndarray
    z: float

    @property
    def low(self) -> np.ndarray:
        return self.center - self.half_width

    @property
    def high(self) -> np.ndarray:
        return self.center + self.half_width

    def contains(self, y) -> np.ndarray:
        return (y >= self.low) & (y <= self.high)

    def write_csv(self, path) -> None:
        if self.center.ndim != 1:
            raise ConfigError("band CSV needs a single initial condition")
        with open(path, "w") as fh:
            fh.write("horizon,center,low,high\n")
            for h, c, lo, hi in zip(self.horizons, self.center, self.low, self.high):
                fh.write(f"{h},{float(c)!r},{float(lo)!r},{float(hi)!r}\n")


CENTERS = ("exact", "leading", "asymptotic")


def band(params: ModelParams, horizons, log_ep0, log_dp0, z: float = 1.96, center: str = "exact",
         mu0=0.0, dividend_variance: str = "exact") -> ConfidenceBand:
    """Analytical band center +/- z * sd of the gross yield.

    ``center``: "exact" finite-h mean, "leading" long-run limit plus the 1/h
    correction, or "asymptotic" g(1+F)+G. The price and dividend variances are
    added as independent sources. Array initial conditions broadcast to a
    leading axis.
    """
    params.validate()
    if z < 0:
        raise ConfigError("z must be non-negative")
    if center not in CENTERS:
        raise ConfigError(f"center must be one of {CENTERS}")
    if dividend_variance not in ("exact", "linear"):
        raise ConfigError("dividend_variance must be 'exact' or 'linear'")
    hs = _horizons(horizons)
    ep, dp, m0 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (log_ep0, log_dp0, mu0)))
    shape = ep.shape
    ep, dp, m0 = ep.ravel(), dp.ravel(), m0.ravel()
    n = len(ep)

    price_var = variance_Y(hs, params) / hs.astype(float) ** 2
    dmean, div_var = exact_dividend_moments_grid(hs, params, dp, ep)
    if dividend_variance == "linear":
        div_var = dividend_contribution_moments(hs[None, :], params, dp[:, None], ep[:, None])[1]
    if center == "exact":
        price_mean = expected_Y(hs[None, :], params, -ep[:, None], m0[:, None], ep[:, None])
        cen = (price_mean + ep[:, None]) / hs[None, :] + dmean
    else:
        cen = np.empty((n, len(hs)))
    if center == "asymptotic":
        cen[:] = np.asarray(asymptotic_yield(params, ep))[:, None]
    elif center == "leading":
        lc = np.array([leading_correction(params, e, d) for e, d in zip(ep, dp)])
        cen[:] = np.asarray(asymptotic_yield(params, ep))[:, None] + lc[:, None] / hs[None, :]
    hw = z * np.sqrt(price_var[None, :] + div_var)
    if shape == ():
        return ConfidenceBand(hs, cen[0], hw[0], z)
    return ConfidenceBand(hs, cen.reshape(shape + (len(hs),)), hw.reshape(shape + (len(hs),)), z)


def coverage(scenarios: ScenarioSet, z: float = 1.96, center: str = "exact") -> np.ndarray:
    """Fraction of simulated yields inside their own initial-condition band, per horizon."""
    ini = scenarios.initial
    bd = band(scenarios.params, scenarios.horizons, ini.log_ep0, ini.log_dp0, z, center, ini.mu0)
    k = scenarios.scenario
    inside = (scenarios.yields >= bd.low[k]) & (scenarios.yields <= bd.high[k])
    return inside.mean(axis=0)


@dataclass(frozen=True)
class HistoryComparison:
    horizons: np.ndarray
    coverage: np.ndarray
    mean_residual: np.ndarray  # mean of (observed - band center)
    mean_abs_residual: np.ndarray
    n_points: np.ndarray
    dropped: tuple[int, ...]

    def table(self) -> str:
        rows = ["horizon  n_points  coverage  mean_resid  mean_abs_resid"]
        for h, n, c, r, a in zip(self.horizons, self.n_points, self.coverage,
                                 self.mean_residual, self.mean_abs_residual):
            rows.append(f"{h:7d}  {n:8d}  {c:8.4f}  {r: .6f}  {a:.6f}")
        for h in self.dropped:
            rows.append(f"{h:7d}  dropped: horizon exceeds data span")
        return "\n".join(rows) + "\n"


def compare_to_history(series: MarketSeries, params: ModelParams, horizons=DEFAULT_HORIZONS,
                       z: float = 1.96, start=None, center: str = "exact") -> HistoryComparison:
    """Share of historical (log EP_0, y_{t,h}) points inside each start month's band."""
    hs = _horizons(horizons)
    keep, dropped = [], []
    cov, mres, mabs, npts = [], [], [], []
    for h in hs:
        try:
            idx = usable_months(series, start, horizon=int(h))
        except RangeError:
            dropped.append(int(h))
            logger.info("horizon %d exceeds the data span; dropped", h)
            continue
        ini = InitialConditions(series.log_ep[idx], series.mu_proxy[idx], series.log_dp[idx])
        total, _, _ = yield_components(series, int(h))
        y = total[idx]
        ok = np.isfinite(y)
        if not ok.any():
            dropped.append(int(h))
            continue
        bd = band(params, [int(h)], ini.log_ep0[ok], ini.log_dp0[ok], z, center, ini.mu0[ok])
        c, hw = bd.center[:, 0], bd.half_width[:, 0]
        r = y[ok] - c
        keep.append(int(h))
        cov.append(float(np.mean(np.abs(r) <= hw)))
        mres.append(float(r.mean()))
        mabs.append(float(np.abs(r).mean()))
        npts.append(int(ok.sum()))
    return HistoryComparison(np.array(keep, dtype=np.int64), np.array(cov), np.array(mres),
                             np.array(mabs), np.array(npts, dtype=np.int64), tuple(dropped))

