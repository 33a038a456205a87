"""Predictive regressions with a persistent regressor.

The predictive system is

    y_t = alpha + beta * x_{t-1} + u_t
    x_t = theta + rho * x_{t-1} + v_t

and ``beta`` is estimated by the augmented regression of y_t on x_{t-1} and a
proxy of v_t built from a second-order bias-corrected AR(1) coefficient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, RangeError, SingularityError

MIN_BIAS_CORRECTION_N = 10
_RANK_TOL = 1e-10


@dataclass(frozen=True)
class OLSFit:
    coefficients: np.ndarray
    residuals: np.ndarray
    residual_variance: float
    coefficient_standard_errors: np.ndarray
    r_squared: float
    n_observations: int
    xtx_inverse: np.ndarray


def ols(y, X) -> OLSFit:
    """Ordinary least squares of ``y`` on the columns of ``X``.

    Standard errors are residual variance (RSS / (n - k)) times the diagonal of
    (X'X)^{-1}. ``X`` must carry its own intercept column.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if len(y) != n:
        raise AlignmentError(f"len(y)={len(y)} but X has {n} rows")
    if n <= k:
        raise SingularityError(f"need more observations ({n}) than regressors ({k})")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
        raise SingularityError("non-finite values in regression inputs")
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    scale = np.linalg.norm(X, axis=0).max()
    if scale == 0 or diag.min() <= _RANK_TOL * scale:
        raise SingularityError("design matrix is rank deficient")
    coef = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ coef
    rss = float(resid @ resid)
    s2 = rss / (n - k)
    Rinv = np.linalg.inv(R)
    xtx_inv = Rinv @ Rinv.T
    se = np.sqrt(s2 * np.diag(xtx_inv))
    dev = y - y.mean()
    tss = float(dev @ dev)
    r2 = 1.0 - rss / tss if tss > 0 else float("nan")
    return OLSFit(coef, resid, s2, se, r2, n, xtx_inv)


@dataclass(frozen=True)
class AR1Fit:
    theta_ar: float
    rho: float
    residuals: np.ndarray
    innovation_variance: float
    rho_standard_error: float
    n: int  # number of observations of x


def fit_ar1(x) -> AR1Fit:
    """OLS of x_t on (1, x_{t-1})."""
    x = np.asarray(x, dtype=float)
    if len(x) < 3:
        raise RangeError("AR(1) fit needs at least 3 observations")
    return _fit_ar1_pairs(x[:-1], x[1:], len(x))


def _fit_ar1_pairs(prev, nxt, n_obs) -> AR1Fit:
    X = np.column_stack([np.ones(len(prev)), prev])
    fit = ols(nxt, X)
    theta, rho = fit.coefficients
    return AR1Fit(float(theta), float(rho), fit.residuals, fit.residual_variance,
                  float(fit.coefficient_standard_errors[1]), int(n_obs))


def corrected_rho(rho_ols: float, n: int) -> float:
    """Second-order bias-corrected AR(1) coefficient."""
    c = 1.0 + 3.0 * rho_ols
    return rho_ols + c / n + 3.0 * c / n**2


@dataclass(frozen=True)
class BiasCorrectedAR1:
    rho_c: float
    theta_c: float
    proxy_residuals: np.ndarray
    n: int


def bias_correct(ar1: AR1Fit, x) -> BiasCorrectedAR1:
    """Bias-corrected (rho, theta) and the innovation proxy v^c_t.

    ``n`` is the number of observations of ``x``; theta^c = (1 - rho^c) * mean(x).
    """
    x = np.asarray(x, dtype=float)
    return _bias_correct_pairs(ar1, x[:-1], x[1:], x)


def _bias_correct_pairs(ar1, prev, nxt, level_sample) -> BiasCorrectedAR1:
    n = ar1.n
    if n < MIN_BIAS_CORRECTION_N:
        raise RangeError(f"bias correction needs n >= {MIN_BIAS_CORRECTION_N}, got {n}")
    rho_c = corrected_rho(ar1.rho, n)
    theta_c = (1.0 - rho_c) * float(np.mean(level_sample))
    proxy = nxt - theta_c - rho_c * prev
    return BiasCorrectedAR1(rho_c, theta_c, proxy, n)


@dataclass(frozen=True)
class AugmentedFit:
    alpha_c: float
    beta_c: float
    phi_c: float
    beta_c_standard_error: float
    t_statistic: float
    residuals: np.ndarray
    error_covariance: np.ndarray
    beta_ols: float
    beta_ols_standard_error: float
    rho_ols: float
    rho_c: float
    n: int

    def scaled(self, factor: float) -> dict[str, float]:
        """Coefficients multiplied by ``factor`` (e.g. 12e4 for yearly 1e-4 units)."""
        return {
            "alpha": self.alpha_c * factor,
            "beta": self.beta_c * factor,
            "beta_se": self.beta_c_standard_error * factor,
            "t": self.t_statistic,
            "n": self.n,
        }


def augmented_regression(y, x) -> AugmentedFit:
    """Low-bias fit of y_t = alpha + beta x_{t-1} + u_t.

    ``x`` holds x_0..x_n and ``y`` holds y_1..y_n, so ``len(y) == len(x) - 1``.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if len(y) != len(x) - 1:
        raise AlignmentError(f"need len(y) == len(x) - 1, got {len(y)} and {len(x)}")
    return augmented_regression_pairs(y, x[:-1], x[1:], x)


def augmented_regression_pairs(y, x_prev, x_next, level_sample=None) -> AugmentedFit:
    """Augmented regression on explicit (x_{t-1}, x_t) pairs.

    Used for overlapping multi-period samples where consecutive pairs are not
    a single chained series. ``level_sample`` feeds the theta^c mean and
    defaults to the union of both ends.
    """
    y = np.asarray(y, dtype=float)
    x_prev = np.asarray(x_prev, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    if not len(y) == len(x_prev) == len(x_next):
        raise AlignmentError("y, x_prev and x_next must have equal length")
    if level_sample is None:
        level_sample = np.concatenate([x_prev[:1], x_next])
    level_sample = np.asarray(level_sample, dtype=float)
    ar1 = _fit_ar1_pairs(x_prev, x_next, len(level_sample))
    bc = _bias_correct_pairs(ar1, x_prev, x_next, level_sample)
    return _augmented_fit(y, x_prev, ar1, bc)


def _augmented_fit(y, x_lag, ar1: AR1Fit, bc: BiasCorrectedAR1) -> AugmentedFit:
    n = len(y)
    ones = np.ones(n)
    plain = ols(y, np.column_stack([ones, x_lag]))
    vc = bc.proxy_residuals
    if np.linalg.norm(vc) <= 1e-12 * max(np.linalg.norm(x_lag), 1.0):
        # augmentation vanishes
        alpha, beta = plain.coefficients
        phi = 0.0
        resid = plain.residuals
        se_beta_ols = float(plain.coefficient_standard_errors[1])
    else:
        fit = ols(y, np.column_stack([ones, x_lag, vc]))
        alpha, beta, phi = fit.coefficients
        resid = fit.residuals
        se_beta_ols = float(fit.coefficient_standard_errors[1])

    N = bc.n
    var_rho_c = (1.0 + 3.0 / N + 9.0 / N**2) ** 2 * ar1.rho_standard_error**2
    se = float(np.sqrt(se_beta_ols**2 + phi**2 * var_rho_c))
    sigma = np.cov(np.vstack([plain.residuals, ar1.residuals]))
    return AugmentedFit(
        alpha_c=float(alpha),
        beta_c=float(beta),
        phi_c=float(phi),
        beta_c_standard_error=se,
        t_statistic=float(beta) / se if se > 0 else float("inf") * np.sign(beta),
        residuals=resid,
        error_covariance=sigma,
        beta_ols=float(plain.coefficients[1]),
        beta_ols_standard_error=float(plain.coefficient_standard_errors[1]),
        rho_ols=ar1.rho,
        rho_c=bc.rho_c,
        n=n,
    )


def format_record(fit: AugmentedFit, scale: float = 1.0, prefix: str = "") -> str:
    """Flat ``key = value`` text record of a fit (for the ``report`` command)."""
    rows = [
        ("alpha", fit.alpha_c * scale),
        ("beta", fit.beta_c * scale),
        ("beta_se", fit.beta_c_standard_error * scale),
        ("t", fit.t_statistic),
        ("phi", fit.phi_c),
        ("beta_ols", fit.beta_ols * scale),
        ("rho_ols", fit.rho_ols),
        ("rho_c", fit.rho_c),
        ("n", fit.n),
    ]
    return "".join(f"{prefix}{k} = {v if isinstance(v, int) else float(v)!r}\n" for k, v in rows)
