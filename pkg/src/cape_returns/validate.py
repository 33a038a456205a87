"""Property suite: closed forms against recursions and simulations.

Each oracle returns plain numbers so the same code backs the ``validate``
command and the acceptance tests.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .bootstrap import BootstrapConfig, run_bootstrap
from .dynamics import (
    ModelParams,
    ModelState,
    check_constraints,
    dividend_contribution_moments,
    exact_dividend_moments,
    expected_Y,
    published_params,
    spectrum,
    step,
    variance_Y,
    variance_Y_matrix,
)
from .errors import ConstraintError
from .regression import corrected_rho
from .scenarios import InitialConditions, simulate
from .synthetic import predictive_system


def valid_grid(n: int = 5) -> list[tuple[float, float]]:
    """n x n (gamma, kappa) pairs strictly inside 4 kappa < (1 - gamma)^2."""
    out = []
    for gm in np.linspace(0.05, 0.85, n):
        kmax = (1 - gm) ** 2 / 4
        for frac in np.linspace(0.1, 0.9, n):
            out.append((float(gm), float(frac * kmax)))
    return out


def recursion_vs_closed_form(n_grid: int = 5, hmax: int = 240, base: ModelParams | None = None) -> float:
    """Max |Y_h(recursion) - E_0[Y_h]| with all volatilities zero."""
    base = base or published_params("sp")
    worst = 0.0
    h = np.arange(1, hmax + 1)
    for gm, k in valid_grid(n_grid):
        p = base.with_(gamma=gm, kappa=k, sigma_mu=0.0, sigma_p=0.0, sigma_d=0.0)
        for log_ep0, mu0 in ((-3.0, 0.01), (-2.5, -0.02)):
            s = ModelState.initial(log_ep0, mu0)
            path = np.empty(hmax)
            for i in range(hmax):
                s = step(s, p)
                path[i] = s.Y
            closed = expected_Y(h, p, -log_ep0, mu0, log_ep0)
            worst = max(worst, float(np.abs(path - closed).max()))
    return worst


def random_valid_pairs(n: int, rng) -> np.ndarray:
    """(gamma, kappa) uniform on the admissible region, by rejection from [0,1] x [0,1/4]."""
    rng = np.random.default_rng(rng)
    out = np.empty((0, 2))
    while len(out) < n:
        cand = rng.uniform(0.0, 1.0, (2 * n, 2)) * [1.0, 0.25]
        gm, k = cand[:, 0], cand[:, 1]
        ok = (gm > 0) & (k > 0) & (4 * k < (1 - gm) ** 2)
        out = np.vstack([out, cand[ok]])
    return out[:n]


def spectral_reconstruction(n: int = 1000, seed: int = 0) -> tuple[float, bool]:
    """(max |Q Lambda Q^-1 - J|, whether every lambda is real and in (0, 1))."""
    worst = 0.0
    ok = True
    for gm, k in random_valid_pairs(n, seed):
        sp = spectrum((gm, k))
        if sp.degenerate:
            continue
        lams = np.array([sp.lambda_plus, sp.lambda_minus])
        ok &= bool(np.all(np.isreal(lams)) and np.all((lams > 0) & (lams < 1)))
        err = np.abs(sp.Q @ sp.Lambda @ sp.Q_inverse - sp.J).max()
        worst = max(worst, float(err))
    return worst, ok


def variance_forms(hmax: int = 120) -> float:
    """Max relative gap between the finite-sum and the matrix-power Var_0[Y_h]."""
    worst = 0.0
    for gm, k in valid_grid(3):
        p = published_params("sp").with_(gamma=gm, kappa=k)
        hs = np.arange(2, hmax + 1, 7)  # Var_0[Y_1] = 0
        a = variance_Y(hs, p)
        b = np.array([variance_Y_matrix(int(h), p) for h in hs])
        worst = max(worst, float(np.max(np.abs(a - b) / b)))
    return worst


def constraint_rejection() -> bool:
    """Invalid (gamma, kappa) pairs are refused."""
    for gm, k in ((0.0, 0.01), (1.0, 0.01), (0.5, 0.0), (0.5, 0.07), (-0.1, 0.01)):
        try:
            check_constraints(gm, k)
            return False
        except ConstraintError:
            pass
    return True


def kernel_equivalence(seed: int = 0) -> float:
    """Max gap between the compiled and NumPy kernels (0 when only one exists)."""
    if kernels.compiled is None:
        return 0.0
    py, cy = kernels.python, kernels.compiled
    rng = np.random.default_rng(seed)
    y, x = predictive_system(60, reps=32, rng=rng)
    gaps = [np.abs(py.augmented_betas(y, x) - cy.augmented_betas(y, x)).max()]
    u, v = rng.standard_normal(60), rng.standard_normal(60)
    idx = rng.integers(0, 60, (16, 60))
    x0 = rng.standard_normal(16)
    gaps.append(np.abs(py.bootstrap_betas(u, v, idx, x0, 0.1, 0.2, 0.9)
                       - cy.bootstrap_betas(u, v, idx, x0, 0.1, 0.2, 0.9)).max())
    vv = rng.standard_normal((8, 50))
    gaps.append(np.abs(py.ar1_recursion(x0[:8], 0.1, 0.95, vv) - cy.ar1_recursion(x0[:8], 0.1, 0.95, vv)).max())
    p = published_params("sp")
    outs = []
    for mod in (py, cy):
        m = 5
        state = [np.full(m, 3.0), np.full(m, 0.001), np.zeros(m), np.full(m, -5.8), np.zeros(m)]
        w = np.random.default_rng(1).standard_normal((3, 40, m))
        oY, od = np.empty((40, m)), np.empty((40, m))
        mod.simulate_chunk(*state, 0, w[0], w[1], w[2], p.gamma, p.kappa, p.sigma_mu, p.sigma_xi,
                           p.theta_div, p.sigma_d, np.full(m, 3.3), np.full(m, 3e-3), np.full(m, -5.8), oY, od)
        outs.append((oY, od))
    gaps.append(np.abs(outs[0][0] - outs[1][0]).max())
    gaps.append(np.abs(outs[0][1] - outs[1][1]).max())
    return float(max(gaps))


def diffusive_scaling(n_paths: int = 100_000, h: int = 2000, seed: int = 0,
                      params: ModelParams | None = None) -> dict:
    """h Var[(p_h - p_0)/h] from simulation, against sigma_p^2."""
    p = params or published_params("sp")
    ini = InitialConditions([-3.0], [0.0], [float(p.log_G(-3.0))])
    sc = simulate(p, ini, [h], n_paths, seed)
    r = sc.price_yields[:, 0]
    hv = float(h * r.var(ddof=1))
    return {"h_var": hv, "sigma_p2": p.sigma_p**2, "rel_err": hv / p.sigma_p**2 - 1,
            "closed_form_h_var": float(variance_Y(h, p) / h)}


def _var_se(x: np.ndarray) -> float:
    d = x - x.mean()
    m2 = (d**2).mean()
    m4 = (d**4).mean()
    return math.sqrt(max(m4 - m2 * m2, 0.0) / len(x))


def dividend_moments_mc(n_paths: int = 100_000, h: int = 120, seed: int = 0, log_ep0: float = -3.0,
                        log_dp_offset: float = 0.3, params: ModelParams | None = None) -> dict:
    """Simulated dividend contribution against the closed forms.

    Runs twice: from log DP_0 = log G + ``log_dp_offset`` and from log DP_0 = log G.
    """
    p = params or published_params("sp")
    lg = float(p.log_G(log_ep0))
    out = {}
    for tag, dp0 in (("off", lg + log_dp_offset), ("eq", lg)):
        ini = InitialConditions([log_ep0], [0.0], [dp0])
        sc = simulate(p, ini, [h], n_paths, seed)
        d = sc.yields[:, 0] - sc.price_yields[:, 0]
        mean, var = float(d.mean()), float(d.var(ddof=1))
        se_mean, se_var = float(d.std(ddof=1) / math.sqrt(len(d))), _var_se(d)
        pm, pv = dividend_contribution_moments(h, p, dp0, log_ep0, method="linear")
        em, ev = exact_dividend_moments(h, p, dp0, log_ep0)
        out[tag] = {
            "mc_mean": mean, "mc_var": var, "se_mean": se_mean, "se_var": se_var,
            "linear_mean": pm, "linear_var": pv, "exact_mean": em, "exact_var": ev,
            "z_mean_linear": (mean - pm) / se_mean, "z_var_linear": (var - pv) / se_var,
            "z_mean_exact": (mean - em) / se_mean, "z_var_exact": (var - ev) / se_var,
            "G": float(p.G(log_ep0)), "z_mean_G": (mean - float(p.G(log_ep0))) / se_mean,
        }
    return out


def ols_slopes(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Row-wise OLS slope of y (B, n) on x (B, n) with intercept."""
    a = x - x.mean(axis=1, keepdims=True)
    c = y - y.mean(axis=1, keepdims=True)
    return np.einsum("ij,ij->i", a, c) / np.einsum("ij,ij->i", a, a)


def bias_study(reps: int = 10_000, n: int = 200, rho: float = 0.95, corr: float = -0.9, seed: int = 0,
               chunk: int = 2000) -> dict:
    """Mean bias of OLS and bias-corrected rho and beta (true beta = 0)."""
    rng = np.random.default_rng(seed)
    r_ols, r_c, b_ols, b_c = [], [], [], []
    done = 0
    while done < reps:
        m = min(chunk, reps - done)
        y, x = predictive_system(n, m, rho=rho, corr=corr, rng=rng)
        ro = ols_slopes(x[:, 1:], x[:, :-1])
        r_ols.append(ro)
        r_c.append(corrected_rho(ro, n + 1))
        b_ols.append(ols_slopes(y, x[:, :-1]))
        b_c.append(kernels.augmented_betas(y, x))
        done += m
    r_ols, r_c, b_ols, b_c = (np.concatenate(a) for a in (r_ols, r_c, b_ols, b_c))
    return {"bias_rho_ols": float(r_ols.mean() - rho), "bias_rho_c": float(r_c.mean() - rho),
            "bias_beta_ols": float(b_ols.mean()), "bias_beta_c": float(b_c.mean()),
            "se_beta_c": float(b_c.std() / math.sqrt(reps))}


def bootstrap_size(outer: int = 200, inner: int = 2000, n: int = 200, rho: float = 0.95, corr: float = -0.9,
                   seed: int = 0, level: float = 0.05) -> dict:
    """Rejection rate of the one-sided bootstrap test of beta = 0 on data drawn with beta = 0."""
    ss = np.random.SeedSequence(seed)
    data_seed, boot_seed = ss.spawn(2)
    rng = np.random.default_rng(data_seed)
    pv = np.empty(outer)
    boot_master = int(boot_seed.generate_state(1, np.uint64)[0] >> np.uint64(1))
    for i in range(outer):
        y, x = predictive_system(n, 1, rho=rho, corr=corr, rng=rng)
        res = run_bootstrap(y[0], x[0], BootstrapConfig(replications=inner, master_seed=boot_master + i))
        pv[i] = res.p_value_upper
    return {"rejection_rate": float(np.mean(pv <= level)), "p_values": pv}


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _check(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failed check, reported not raised
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return CheckResult(name, bool(ok), detail, time.perf_counter() - t0)


def run_suite(quick: bool = False, seed: int = 0) -> list[CheckResult]:
    checks = []

    def c1():
        err = recursion_vs_closed_form(5, 240)
        return err <= 1e-10, f"max error {err:.2e}"

    def c2():
        err, ok = spectral_reconstruction(200 if quick else 1000, seed)
        return ok and err <= 1e-12, f"max error {err:.2e}, eigenvalues in (0,1): {ok}"

    def c3():
        err = variance_forms(60 if quick else 240)
        return err <= 1e-10, f"max relative gap {err:.2e}"

    def c4():
        return constraint_rejection(), "invalid (gamma, kappa) refused"

    def c5():
        gap = kernel_equivalence(seed)
        return gap <= 1e-9, f"backend {kernels.BACKEND}, max gap {gap:.2e}"

    def c6():
        n_paths = 20_000 if quick else 100_000
        r = diffusive_scaling(n_paths, 500 if quick else 2000, seed)
        if quick:  # h = 500 is still in the transient; compare with the finite-h closed form
            gap = r["h_var"] / r["closed_form_h_var"] - 1
            return abs(gap) <= 0.03, f"h Var vs closed form at h=500: {gap:+.4f}"
        return abs(r["rel_err"]) <= 0.03, f"h Var / sigma_p^2 - 1 = {r['rel_err']:+.4f}"

    def c7():
        r = dividend_moments_mc(20_000 if quick else 100_000, 120, seed)["off"]
        ok = abs(r["z_mean_exact"]) <= 4 and abs(r["z_var_exact"]) <= 4
        return ok, f"z(mean)={r['z_mean_exact']:+.2f}, z(var)={r['z_var_exact']:+.2f} vs exact moments"

    def c8():
        r = bias_study(2000 if quick else 10_000, seed=seed)
        ok = abs(r["bias_rho_c"]) < abs(r["bias_rho_ols"]) and abs(r["bias_beta_c"]) < abs(r["bias_beta_ols"])
        return ok, (f"rho bias {r['bias_rho_ols']:+.4f} -> {r['bias_rho_c']:+.4f}, "
                    f"beta bias {r['bias_beta_ols']:+.4f} -> {r['bias_beta_c']:+.4f}")

    for name, fn in (("closed form vs recursion", c1), ("spectral reconstruction", c2),
                     ("variance sum vs matrix powers", c3), ("constraint rejection", c4),
                     ("compiled vs numpy kernels", c5), ("diffusive scaling", c6),
                     ("dividend moments (exact)", c7), ("bias correction", c8)):
        checks.append(_check(name, fn))
    return checks


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  seconds  detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.seconds:7.2f}  {r.detail}")
    n_ok = sum(r.passed for r in results)
    lines.append(f"{n_ok}/{len(results)} checks passed")
    return "\n".join(lines) + "\n"
