# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, NAN

cnp.import_array()


def ar1_recursion(x0, double theta, double rho, v):
    cdef double[:, ::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef double[::1] xx0 = np.ascontiguousarray(x0, dtype=np.float64)
    cdef Py_ssize_t B = vv.shape[0], n = vv.shape[1], b, t
    out = np.empty((B, n + 1))
    cdef double[:, ::1] x = out
    with nogil:
        for b in range(B):
            x[b, 0] = xx0[b]
            for t in range(n):
                x[b, t + 1] = theta + rho * x[b, t] + vv[b, t]
    return out


cdef double _beta_one(double[::1] y, double[::1] x, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t t
    cdef double N = n + 1
    cdef double mp = 0, mn = 0, my = 0
    for t in range(n):
        mp += x[t]
        mn += x[t + 1]
        my += y[t]
    mp /= n
    mn /= n
    my /= n
    cdef double saa = 0, san = 0
    cdef double a, bn, c
    for t in range(n):
        a = x[t] - mp
        bn = x[t + 1] - mn
        saa += a * a
        san += a * bn
    if saa == 0:
        return NAN
    cdef double rho = san / saa
    cdef double k = 1.0 + 3.0 * rho
    cdef double rho_c = rho + k / N + 3.0 * k / (N * N)
    cdef double sab = 0, sbb = 0, sac = 0, sbc = 0, b
    for t in range(n):
        a = x[t] - mp
        b = (x[t + 1] - mn) - rho_c * a
        c = y[t] - my
        sab += a * b
        sbb += b * b
        sac += a * c
        sbc += b * c
    cdef double det = saa * sbb - sab * sab
    if det == 0:
        return NAN
    return (sbb * sac - sab * sbc) / det


def augmented_betas(y, x):
    cdef double[:, ::1] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[:, ::1] xx = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t B = yy.shape[0], n = yy.shape[1], b
    out = np.empty(B)
    cdef double[::1] res = out
    with nogil:
        for b in range(B):
            res[b] = _beta_one(yy[b], xx[b], n)
    return out


def bootstrap_betas(u, v, idx, x0, double alpha, double theta, double rho):
    cdef double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef long long[:, ::1] ii = np.ascontiguousarray(idx, dtype=np.int64)
    cdef double[::1] xx0 = np.ascontiguousarray(x0, dtype=np.float64)
    cdef Py_ssize_t B = ii.shape[0], n = ii.shape[1], b, t
    out = np.empty(B)
    cdef double[::1] res = out
    cdef double[::1] yb = np.empty(n)
    cdef double[::1] xb = np.empty(n + 1)
    with nogil:
        for b in range(B):
            xb[0] = xx0[b]
            for t in range(n):
                yb[t] = alpha + uu[ii[b, t]]
                xb[t + 1] = theta + rho * xb[t] + vv[ii[b, t]]
            res[b] = _beta_one(yb, xb, n)
    return out


def simulate_chunk(Y, mu, xi, dp, divsum, long t0, w_mu, w_p, w_d,
                   double gamma, double kappa, double sig_mu, double sig_xi,
                   double theta_d, double sig_d, H, gF1, logG, out_Y, out_div):
    cdef double[::1] y_ = Y, m_ = mu, x_ = xi, d_ = dp, ds = divsum
    cdef double[:, ::1] wm = w_mu, wp = w_p, wd = w_d
    cdef double[::1] hh = np.ascontiguousarray(H, dtype=np.float64)
    cdef double[::1] gf = np.ascontiguousarray(gF1, dtype=np.float64)
    cdef double[::1] lg = np.ascontiguousarray(logG, dtype=np.float64)
    cdef double[:, ::1] oy = out_Y, od = out_div
    cdef Py_ssize_t steps = wm.shape[0], P = wm.shape[1], s, i
    cdef double yn, t
    with nogil:
        for s in range(steps):
            t = t0 + s
            for i in range(P):
                yn = y_[i] + m_[i] + x_[i]
                m_[i] = gamma * m_[i] + kappa * (hh[i] + gf[i] * t - y_[i]) + sig_mu * wm[s, i]
                y_[i] = yn
                x_[i] = x_[i] + sig_xi * wp[s, i]
                d_[i] = d_[i] - theta_d * (d_[i] - lg[i]) + sig_d * wd[s, i]
                ds[i] = ds[i] + log1p(exp(d_[i]))
                oy[s, i] = y_[i]
                od[s, i] = ds[i]
