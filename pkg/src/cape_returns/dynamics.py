"""Momentum/value dynamics of the log price and the log dividend yield.

State (monthly):

    Y_{t+1}  = Y_t + mu_t + xi_t
    mu_{t+1} = gamma mu_t + kappa (H + g(1+F) t - Y_t) + sigma_mu W^mu_t
    xi_{t+1} = xi_t + kappa sigma_p / (1 - gamma) W^p_t
    z_{t+1}  = z_t - theta_d (z_t - log G) + sigma_d W^d_t

with Y_t = p_t - log <e>_0 (so Y_0 = -log EP_0) and z_t = d_{t-1} - p_t.
F, G and H are affine in the initial log EP and frozen at t = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigError, ConstraintError, DegenerateSpectrumError

_DISC_TOL = 1e-14


class LinearForm(NamedTuple):
    """alpha + beta * log EP_0, in monthly natural units."""

    alpha: float
    beta: float

    def __call__(self, log_ep0):
        return self.alpha + self.beta * log_ep0


@dataclass(frozen=True)
class ModelParams:
    gamma: float
    kappa: float
    sigma_mu: float
    sigma_p: float
    g: float
    F_linear: LinearForm  # g (1 + F) = alpha_F + beta_F log EP_0
    G_linear: LinearForm  # G = alpha_G + beta_G log EP_0
    H_linear: LinearForm  # H = alpha_H + beta_H log EP_0
    theta_div: float
    sigma_d: float

    def __post_init__(self):
        for name in ("F_linear", "G_linear", "H_linear"):
            object.__setattr__(self, name, LinearForm(*getattr(self, name)))

    def validate(self) -> "ModelParams":
        check_constraints(self.gamma, self.kappa)
        if not 0 < self.theta_div < 2:
            raise ConstraintError(f"theta_div={self.theta_div} outside (0, 2)")
        for name in ("sigma_mu", "sigma_p", "sigma_d"):
            if getattr(self, name) < 0:
                raise ConstraintError(f"{name} must be non-negative")
        return self

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)

    def growth(self, log_ep0):
        """g (1 + F(log EP_0))."""
        return self.F_linear(log_ep0)

    def G(self, log_ep0):
        return self.G_linear(log_ep0)

    def H(self, log_ep0):
        return self.H_linear(log_ep0)

    def log_G(self, log_ep0):
        G = np.asarray(self.G(log_ep0), dtype=float)
        if np.any(G <= 0):
            raise ConstraintError("dividend level G(log EP_0) must be positive to take its log")
        out = np.log(G)
        return float(out) if out.ndim == 0 else out

    @property
    def logG_of(self) -> Callable[[float], float]:
        return self.log_G

    @property
    def sigma_xi(self) -> float:
        return self.kappa * self.sigma_p / (1.0 - self.gamma)


def check_constraints(gamma: float, kappa: float) -> None:
    """0 < gamma < 1 and 0 < kappa <= (1 - gamma)^2 / 4."""
    if not 0 < gamma < 1:
        raise ConstraintError(f"gamma={gamma} outside (0, 1)")
    if not kappa > 0:
        raise ConstraintError(f"kappa={kappa} must be positive")
    if (1 - gamma) ** 2 - 4 * kappa < -_DISC_TOL:
        raise ConstraintError(f"4 kappa > (1 - gamma)^2 for gamma={gamma}, kappa={kappa}: complex eigenvalues")


def system_matrix(gamma: float, kappa: float) -> np.ndarray:
    return np.array([[1.0, 1.0, 1.0], [-kappa, gamma, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class SystemSpectrum:
    lambda_plus: float
    lambda_minus: float
    J: np.ndarray
    Q: np.ndarray
    Lambda: np.ndarray
    Q_inverse: np.ndarray | None
    degenerate: bool = False

    def require_nondegenerate(self) -> None:
        if self.degenerate:
            raise DegenerateSpectrumError(
                "lambda_+ == lambda_-: closed forms need distinct eigenvalues; perturb kappa slightly"
            )


def _gamma_kappa(p) -> tuple[float, float]:
    if isinstance(p, ModelParams):
        return p.gamma, p.kappa
    return float(p[0]), float(p[1])


def spectrum(params) -> SystemSpectrum:
    """Eigen-decomposition J = Q Lambda Q^{-1} from the explicit closed forms.

    Accepts a :class:`ModelParams` or a ``(gamma, kappa)`` pair.
    """
    gamma, kappa = _gamma_kappa(params)
    check_constraints(gamma, kappa)
    disc = (1 - gamma) ** 2 - 4 * kappa
    root = math.sqrt(disc) if disc > _DISC_TOL else 0.0
    lp = (gamma + 1) / 2 + root / 2
    lm = (gamma + 1) / 2 - root / 2
    J = system_matrix(gamma, kappa)
    # Q and Q^-1 share the rounded eigenvalues; this keeps Q Lambda Q^-1 closest to J
    Q = np.array([[1 - gamma, 1.0, 1.0], [-kappa, lp - 1, lm - 1], [kappa, 0.0, 0.0]])
    Lam = np.diag([1.0, lp, lm])
    degenerate = root == 0.0
    Qinv = None
    if not degenerate:
        det = kappa * (lm - lp)
        Qinv = np.array(
            [
                [0.0, 0.0, lm - lp],
                [kappa * (lm - 1), -kappa, (1 - gamma) * (1 - lm) - kappa],
                [kappa * (1 - lp), kappa, kappa - (1 - gamma) * (1 - lp)],
            ]
        ) / det
    for a in (J, Q, Lam) + ((Qinv,) if Qinv is not None else ()):
        a.setflags(write=False)
    return SystemSpectrum(lp, lm, J, Q, Lam, Qinv, degenerate)


@dataclass(frozen=True)
class ModelState:
    Y: float
    mu: float
    xi: float
    log_dp: float
    t: int
    log_ep0: float

    @classmethod
    def initial(cls, log_ep0: float, mu0: float = 0.0, log_dp0: float = float("nan")) -> "ModelState":
        return cls(Y=-log_ep0, mu=mu0, xi=0.0, log_dp=log_dp0, t=0, log_ep0=log_ep0)


def step(state: ModelState, params: ModelParams, noise=(0.0, 0.0, 0.0)) -> ModelState:
    """One month of the joint price/dividend dynamics.

    ``noise`` is (W^mu, W^p, W^d); any distribution can be injected.
    """
    w_mu, w_p, w_d = noise
    x0 = state.log_ep0
    Y = state.Y + state.mu + state.xi
    mu = (
        params.gamma * state.mu
        + params.kappa * (params.H(x0) + params.growth(x0) * state.t - state.Y)
        + params.sigma_mu * w_mu
    )
    xi = state.xi + params.sigma_xi * w_p
    log_dp = state.log_dp
    if not math.isnan(log_dp):
        log_dp = log_dp - params.theta_div * (log_dp - params.log_G(x0)) + params.sigma_d * w_d
    return ModelState(Y, mu, xi, log_dp, state.t + 1, x0)


def expected_Y(h, params: ModelParams, Y0: float, mu0: float, log_ep0: float | None = None):
    """E_0[Y_h] in closed form (vectorized over ``h``).

    ``log_ep0`` fixes F and H and defaults to -Y0.
    """
    sp = spectrum(params)
    sp.require_nondegenerate()
    if log_ep0 is None:
        log_ep0 = -Y0
    lp, lm, k = sp.lambda_plus, sp.lambda_minus, params.kappa
    gF = params.growth(log_ep0)
    H = params.H(log_ep0)
    h = np.asarray(h, dtype=float)
    d = lm - lp
    lph, lmh = lp**h, lm**h
    out = (
        -lph / d * ((1 - lm) * Y0 + mu0)
        + lmh / d * ((1 - lp) * Y0 + mu0)
        + gF * (h - 1)
        + H
        - (gF - H) * k / d * (lph / (1 - lp) - lmh / (1 - lm))
        - gF * k / d * (lm * (1 - lmh) / (1 - lm) ** 2 - lp * (1 - lph) / (1 - lp) ** 2)
    )
    return float(out) if out.ndim == 0 else out


def _variance_terms(kmax: int, params: ModelParams) -> np.ndarray:
    sp = spectrum(params)
    sp.require_nondegenerate()
    lp, lm = sp.lambda_plus, sp.lambda_minus
    c = params.kappa / (1 - params.gamma)
    k = np.arange(kmax, dtype=float)
    lpk, lmk = lp**k, lm**k
    d2 = (lm - lp) ** 2
    mu_part = params.sigma_mu**2 / d2 * (lmk - lpk) ** 2
    p_part = params.sigma_p**2 / d2 * (lm - lp + lpk * (1 - lm - c) + lmk * (c - 1 + lp)) ** 2
    return mu_part + p_part


def variance_Y(h, params: ModelParams):
    """Var_0[Y_h] as the exact finite sum over k = 0..h-1 (vectorized over ``h``)."""
    h_arr = np.asarray(h, dtype=int)
    hmax = int(h_arr.max()) if h_arr.size else 0
    if np.any(h_arr < 0):
        raise ValueError("horizon must be non-negative")
    csum = np.concatenate(([0.0], np.cumsum(_variance_terms(hmax, params))))
    out = csum[h_arr]
    return float(out) if out.ndim == 0 else out


def variance_Y_matrix(h: int, params: ModelParams) -> float:
    """Var_0[Y_h] from powers of Q Lambda^k Q^{-1}; independent check of :func:`variance_Y`."""
    sp = spectrum(params)
    sp.require_nondegenerate()
    c = params.kappa * params.sigma_p / (1 - params.gamma)
    total = 0.0
    for k in range(h):
        Jk = sp.Q @ np.diag(np.diag(sp.Lambda) ** k) @ sp.Q_inverse
        total += params.sigma_mu**2 * Jk[0, 1] ** 2 + c**2 * Jk[0, 2] ** 2
    return total


def _check_theta(theta: float) -> None:
    if not 0 < theta < 2:
        raise ConstraintError(f"theta_div={theta} outside (0, 2)")


def expected_log_dp(t, params: ModelParams, log_dp0: float, log_ep0: float):
    """E_0[d_{t-1} - p_t]."""
    _check_theta(params.theta_div)
    lg = params.log_G(log_ep0)
    decay = (1 - params.theta_div) ** np.asarray(t, dtype=float)
    out = decay * log_dp0 + lg * (1 - decay)
    return float(out) if np.ndim(out) == 0 else out


def dividend_contribution_moments(h, params: ModelParams, log_dp0: float, log_ep0: float,
                                  method: str = "linear"):
    """Mean and variance of (1/h) sum_{i<h} log(1 + D_i / P_{i+1}).

    ``method="linear"`` gives the first-order (linearized) mean and the
    asymptotic variance G^2 sigma_d^2 / (theta (2 - theta) h). Note that this
    variance treats the monthly terms as uncorrelated; ``method="exact"`` gives
    the finite-h moments of the Gaussian log-yield process instead.
    """
    _check_theta(params.theta_div)
    if method == "exact":
        return exact_dividend_moments(h, params, log_dp0, log_ep0)
    if method != "linear":
        raise ConfigError(f"unknown method {method!r}")
    th = params.theta_div
    G = params.G(log_ep0)
    lg = params.log_G(log_ep0)
    h = np.asarray(h, dtype=float)
    mean = G + G * (1 - th) / th * (log_dp0 - lg) * (1 - (1 - th) ** h) / h
    var = G**2 * params.sigma_d**2 / (th * (2 - th) * h)
    if mean.ndim == 0:
        return float(mean), float(var)
    return mean, var


_GH_X, _GH_W = np.polynomial.hermite.hermgauss(48)


def _log_yield_variances(h: int, theta: float, sigma_d: float) -> np.ndarray:
    """Var_0[z_i] for i = 1..h."""
    phi = 1.0 - theta
    i = np.arange(1, h + 1, dtype=float)
    if phi**2 == 1.0:
        return sigma_d**2 * i
    return sigma_d**2 * (1 - phi ** (2 * i)) / (1 - phi**2)


def _kernel_block(v: np.ndarray, phi: float, rows: slice, cols: slice) -> dict:
    """K_ab[i, j] with Cov(e^{a z_i}, e^{b z_j}) = e^{a m_i + b m_j} K_ab[i, j],
    for months i in ``rows`` and j in ``cols`` (0-based, month = index + 1)."""
    i = np.arange(rows.start, rows.stop)[:, None]
    j = np.arange(cols.start, cols.stop)[None, :]
    vi, vj = v[rows][:, None], v[cols][None, :]
    cov = phi ** np.abs(i - j).astype(float) * np.minimum(vi, vj)  # variance of the earlier month
    return {(a, b): np.exp(0.5 * (a * a * vi + b * b * vj)) * np.expm1(a * b * cov)
            for a, b in ((1, 1), (1, 2), (2, 1), (2, 2))}


def _dividend_kernels(h: int, theta: float, sigma_d: float):
    """Per-month log-yield variances v_i and the full h x h kernels K_ab.

    Only the conditional means m_i depend on the initial conditions.
    """
    v = _log_yield_variances(h, theta, sigma_d)
    return v, _kernel_block(v, 1.0 - theta, slice(0, h), slice(0, h))


def exact_dividend_moments_grid(horizons, params: ModelParams, log_dp0, log_ep0, chunk: int = 64,
                                row_block: int = 128):
    """:func:`exact_dividend_moments` on a horizon grid for many initial conditions.

    Returns (mean, var) of shape (n_conditions, n_horizons). Monthly terms do
    not depend on h, so both moments are prefix sums over the largest horizon.
    The covariance matrix is symmetric, so Var(sum_{i<=h}) is the prefix sum of
    2 sum_{j<i} A_ij + A_ii; rows are built in blocks to keep memory O(h).
    """
    hs = np.atleast_1d(np.asarray(horizons, dtype=np.int64))
    if hs.size == 0 or hs.min() < 1:
        raise ValueError("horizons must be positive")
    th, sd = params.theta_div, params.sigma_d
    _check_theta(th)
    dp0, ep0 = np.broadcast_arrays(np.atleast_1d(np.asarray(log_dp0, dtype=float)),
                                   np.atleast_1d(np.asarray(log_ep0, dtype=float)))
    dp0, ep0 = dp0.ravel(), ep0.ravel()
    hmax = int(hs.max())
    lg = np.atleast_1d(params.log_G(ep0))
    phi = 1.0 - th
    i = np.arange(1, hmax + 1, dtype=float)
    v = _log_yield_variances(hmax, th, sd)
    hf = hs.astype(float)
    mean = np.empty((len(dp0), len(hs)))
    var = np.zeros((len(dp0), len(hs)))

    def blocks():
        for r0 in range(0, hmax, row_block):
            r1 = min(r0 + row_block, hmax)
            K = _kernel_block(v, phi, slice(r0, r1), slice(0, r1))
            lower = np.tril(np.full((r1 - r0, r1), 2.0), k=r0 - 1) + np.eye(r1 - r0, r1, k=r0)
            yield r0, r1, {key: k * lower for key, k in K.items()}

    # small grids keep the kernels across condition chunks; large ones rebuild them
    cached = list(blocks()) if sd != 0 and hmax <= 1024 else None
    for lo in range(0, len(dp0), chunk):
        sl = slice(lo, lo + chunk)
        m = lg[sl, None] + phi**i[None, :] * (dp0[sl] - lg[sl])[:, None]
        nodes = m[:, :, None] + np.sqrt(2 * v)[None, :, None] * _GH_X
        monthly = (np.log1p(np.exp(nodes)) @ _GH_W) / math.sqrt(math.pi)
        mean[sl] = np.cumsum(monthly, axis=1)[:, hs - 1] / hf
        if sd == 0:
            continue
        e1, e2 = np.exp(m), np.exp(2 * m)
        c = np.empty_like(m)
        for r0, r1, K in (cached if cached is not None else blocks()):
            a1, a2 = e1[:, r0:r1, None], e2[:, r0:r1, None]
            b1, b2 = e1[:, None, :r1], e2[:, None, :r1]
            row = (a1 * K[1, 1] * b1 - 0.5 * a1 * K[1, 2] * b2
                   - 0.5 * a2 * K[2, 1] * b1 + 0.25 * a2 * K[2, 2] * b2)
            c[:, r0:r1] = row.sum(axis=2)
        var[sl] = np.cumsum(c, axis=1)[:, hs - 1] / hf**2
    return mean, var


def exact_dividend_moments(h: int, params: ModelParams, log_dp0, log_ep0):
    """Finite-h moments of the dividend contribution for Gaussian z_t.

    The mean is computed by Gauss-Hermite quadrature of log(1 + e^z) per month;
    the variance sums the exact covariances of e^z - e^{2z}/2, the expansion of
    log(1 + e^z) to second order in D/P (~1e-3 monthly). ``log_dp0`` and
    ``log_ep0`` broadcast against each other.
    """
    h = int(h)
    shape = np.broadcast(np.asarray(log_dp0), np.asarray(log_ep0)).shape
    mean, var = exact_dividend_moments_grid([h], params, log_dp0, log_ep0)
    if shape == ():
        return float(mean[0, 0]), float(var[0, 0])
    return mean[:, 0].reshape(shape), var[:, 0].reshape(shape)


def asymptotic_yield(params: ModelParams, log_ep0):
    """Long-run expected gross yield g (1 + F) + G."""
    return params.growth(log_ep0) + params.G(log_ep0)


def leading_correction(params: ModelParams, log_ep0: float, log_dp0: float | None = None) -> float:
    """Coefficient of 1/h in E_0[y_h] - (g (1 + F) + G).

    The dividend term carries +G (1 - theta)/theta (log DP_0 - log G), matching
    the finite-h dividend mean. ``log_dp0=None`` drops the dividend term.
    """
    sp = spectrum(params)
    sp.require_nondegenerate()
    lp, lm, k = sp.lambda_plus, sp.lambda_minus, params.kappa
    if lp >= 1 or lm >= 1:
        raise ConstraintError("eigenvalue at 1: leading correction undefined")
    gF = params.growth(log_ep0)
    out = params.H(log_ep0) - gF * (1 + k * (1 - lm * lp) / ((1 - lm) ** 2 * (1 - lp) ** 2)) + log_ep0
    if log_dp0 is not None:
        th = params.theta_div
        _check_theta(th)
        out += params.G(log_ep0) * (1 - th) / th * (log_dp0 - params.log_G(log_ep0))
    return float(out)


def damping_scale(params) -> float:
    """-1 / log(lambda_+), in months."""
    sp = spectrum(params)
    sp.require_nondegenerate()
    if sp.lambda_plus <= 0:
        return 0.0
    return -1.0 / math.log(sp.lambda_plus)


def expected_yield(h, params: ModelParams, log_ep0: float, mu0: float, log_dp0: float,
                   dividend: str = "linear"):
    """Finite-h expected gross yield: price part from E_0[Y_h] plus dividend mean."""
    Y0 = -log_ep0
    price = (np.asarray(expected_Y(h, params, Y0, mu0, log_ep0)) - Y0) / np.asarray(h, dtype=float)
    if dividend == "exact":
        div = exact_dividend_moments_grid(np.atleast_1d(h), params, log_dp0, log_ep0)[0][0]
        div = div.reshape(np.shape(h))
    else:
        div = dividend_contribution_moments(h, params, log_dp0, log_ep0)[0]
    out = price + div
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Parameter files

SCALED_RATE = 1e-4  # g, kappa, theta_div and variances per month
SCALED_LINEAR = 1e-4 / 12.0  # F and G coefficients quoted yearly

_SCALED_RATES = ("g", "kappa", "theta_div", "sigma_mu2", "sigma_p2", "sigma_d2")
_LINEAR_KEYS = ("alpha_F", "beta_F", "alpha_G", "beta_G")
_ALL_KEYS = ("gamma",) + _SCALED_RATES + _LINEAR_KEYS + ("alpha_H", "beta_H")


def params_to_dict(params: ModelParams, units: str = "natural") -> dict[str, float]:
    d = {
        "gamma": params.gamma,
        "kappa": params.kappa,
        "g": params.g,
        "theta_div": params.theta_div,
        "sigma_mu2": params.sigma_mu**2,
        "sigma_p2": params.sigma_p**2,
        "sigma_d2": params.sigma_d**2,
        "alpha_F": params.F_linear.alpha,
        "beta_F": params.F_linear.beta,
        "alpha_G": params.G_linear.alpha,
        "beta_G": params.G_linear.beta,
        "alpha_H": params.H_linear.alpha,
        "beta_H": params.H_linear.beta,
    }
    if units == "scaled":
        for key in _SCALED_RATES:
            d[key] /= SCALED_RATE
        for key in _LINEAR_KEYS:
            d[key] /= SCALED_LINEAR
    elif units != "natural":
        raise ConfigError(f"units must be 'natural' or 'scaled', got {units!r}")
    return d


def params_from_dict(d: dict[str, float], units: str = "natural") -> ModelParams:
    missing = [k for k in _ALL_KEYS if k not in d]
    if missing:
        raise ConfigError(f"parameter file missing {missing}")
    v = {k: float(d[k]) for k in _ALL_KEYS}
    if units == "scaled":
        for key in _SCALED_RATES:
            v[key] *= SCALED_RATE
        for key in _LINEAR_KEYS:
            v[key] *= SCALED_LINEAR
    elif units != "natural":
        raise ConfigError(f"units must be 'natural' or 'scaled', got {units!r}")
    return ModelParams(
        gamma=v["gamma"],
        kappa=v["kappa"],
        sigma_mu=math.sqrt(v["sigma_mu2"]),
        sigma_p=math.sqrt(v["sigma_p2"]),
        g=v["g"],
        F_linear=LinearForm(v["alpha_F"], v["beta_F"]),
        G_linear=LinearForm(v["alpha_G"], v["beta_G"]),
        H_linear=LinearForm(v["alpha_H"], v["beta_H"]),
        theta_div=v["theta_div"],
        sigma_d=math.sqrt(v["sigma_d2"]),
    )


_UNIT_NOTES = {
    "natural": "all rates per month, variances per month, F/G coefficients monthly",
    "scaled": "g, kappa, theta_div, sigma*2 in 1e-4 per month; F/G coefficients yearly in 1e-4",
}


def save_params(params: ModelParams, path: str | Path, units: str = "natural") -> None:
    d = params_to_dict(params, units)
    lines = [f"# model parameters; {_UNIT_NOTES[units]}", f"units = {units}"]
    lines += [f"{k} = {float(d[k])!r}" for k in _ALL_KEYS]
    Path(path).write_text("\n".join(lines) + "\n")


def load_params(path: str | Path) -> ModelParams:
    d: dict[str, float] = {}
    units = "natural"
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "units":
            units = value
            continue
        try:
            d[key] = float(value)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: {key} is not a number") from None
    return params_from_dict(d, units)


# Table values for the two markets (Table 2 rates, Table 1 yearly F and G).
_PUBLISHED_VALUES = {
    "sp": dict(gamma=0.25, kappa=323, g=12, theta_div=271, sigma_mu2=12, sigma_p2=18.2, sigma_d2=13,
               alpha_F=2531, beta_F=767, alpha_G=1527, beta_G=393, alpha_H=0.85, beta_H=-0.85),
    "nyse": dict(gamma=0.08, kappa=304, g=19, theta_div=445, sigma_mu2=17, sigma_p2=16.8, sigma_d2=19,
                 alpha_F=5681, beta_F=1880, alpha_G=1289, beta_G=305, alpha_H=2.62, beta_H=-0.52),
}


def published_params(market: str = "sp") -> ModelParams:
    """Published calibration for ``"sp"`` (S&P Composite) or ``"nyse"`` (NYSE/AMEX)."""
    try:
        return params_from_dict(_PUBLISHED_VALUES[market], units="scaled")
    except KeyError:
        raise ConfigError(f"unknown market {market!r}") from None
