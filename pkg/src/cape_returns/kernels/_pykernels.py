"""Pure NumPy implementations of the hot loops.

Loops run over time; each step is vectorized across replicas or paths.
Signatures match the compiled module exactly.
"""
import numpy as np


def ar1_recursion(x0, theta, rho, v):
    """x[:, 0] = x0 and x[:, t] = theta + rho * x[:, t-1] + v[:, t-1]."""
    v = np.asarray(v, dtype=float)
    B, n = v.shape
    x = np.empty((B, n + 1))
    x[:, 0] = x0
    for t in range(n):
        x[:, t + 1] = theta + rho * x[:, t] + v[:, t]
    return x


def augmented_betas(y, x):
    """Augmented-regression slope for each row of ``y`` (B, n) on ``x`` (B, n+1)."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n = y.shape[1]
    N = n + 1
    prev = x[:, :-1]
    nxt = x[:, 1:]
    a = prev - prev.mean(axis=1, keepdims=True)
    bn = nxt - nxt.mean(axis=1, keepdims=True)
    c = y - y.mean(axis=1, keepdims=True)
    saa = np.einsum("ij,ij->i", a, a)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.einsum("ij,ij->i", a, bn) / saa
        k = 1.0 + 3.0 * rho
        rho_c = rho + k / N + 3.0 * k / N**2
        b = bn - rho_c[:, None] * a
        sab = np.einsum("ij,ij->i", a, b)
        sbb = np.einsum("ij,ij->i", b, b)
        sac = np.einsum("ij,ij->i", a, c)
        sbc = np.einsum("ij,ij->i", b, c)
        det = saa * sbb - sab * sab
        return (sbb * sac - sab * sbc) / det


def bootstrap_betas(u, v, idx, x0, alpha, theta, rho):
    """Null-imposed bootstrap replicas and their augmented slopes.

    Row b of ``idx`` (B, n) selects residual pairs (u, v); the regressor is
    rebuilt recursively from ``x0[b]``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    idx = np.asarray(idx, dtype=np.int64)
    yb = alpha + u[idx]
    xb = ar1_recursion(x0, theta, rho, v[idx])
    return augmented_betas(yb, xb)


def simulate_chunk(Y, mu, xi, dp, divsum, t0, w_mu, w_p, w_d,
                   gamma, kappa, sig_mu, sig_xi, theta_d, sig_d,
                   H, gF1, logG, out_Y, out_div):
    """Advance every path ``w_mu.shape[0]`` months, updating state in place.

    After step s, ``out_Y[s]`` holds Y and ``out_div[s]`` the running sum of
    log(1 + D/P).
    """
    steps = w_mu.shape[0]
    for s in range(steps):
        t = t0 + s
        Y_new = Y + mu + xi
        mu_new = gamma * mu + kappa * (H + gF1 * t - Y) + sig_mu * w_mu[s]
        xi += sig_xi * w_p[s]
        dp += -theta_d * (dp - logG) + sig_d * w_d[s]
        divsum += np.log1p(np.exp(dp))
        Y[...] = Y_new
        mu[...] = mu_new
        out_Y[s] = Y
        out_div[s] = divsum
