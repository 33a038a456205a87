"""Compare the compiled kernels with the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on identical inputs under both backends. The script
reports the best wall time of ``--repeat`` runs and the largest absolute
difference between the two outputs.
"""
import argparse
import time

import numpy as np

from cape_returns import kernels


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bootstrap_case(rng, B=2000, n=200):
    u = rng.standard_normal(n)
    v = rng.standard_normal(n)
    idx = rng.integers(0, n, size=(B, n))
    x0 = rng.standard_normal(B)
    return lambda mod: mod.bootstrap_betas(u, v, idx, x0, 0.01, 0.05, 0.95)


def ar1_case(rng, B=2000, n=1000):
    v = rng.standard_normal((B, n))
    x0 = np.zeros(B)
    return lambda mod: mod.ar1_recursion(x0, 0.0, 0.95, v)


def simulate_case(rng, m=4096, steps=256):
    w = rng.standard_normal((3, steps, m))
    H = np.full(m, 0.85)
    gF = np.full(m, 1e-4)
    lg = np.full(m, -3.5)

    def run(mod):
        Y = np.zeros(m)
        mu = np.zeros(m)
        xi = np.zeros(m)
        dp = np.full(m, -3.5)
        ds = np.zeros(m)
        oY = np.empty((steps, m))
        od = np.empty((steps, m))
        mod.simulate_chunk(Y, mu, xi, dp, ds, 0, w[0], w[1], w[2],
                           0.25, 0.03, 0.01, 0.002, 0.02, 0.03, H, gF, lg, oY, od)
        return np.concatenate([oY.ravel(), od.ravel()])
    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if kernels.compiled is None:
        print("compiled kernels not built; run `pip install --no-build-isolation -e .` first")
        return 1
    rng = np.random.default_rng(args.seed)
    cases = {
        "bootstrap_betas (2000 x 200)": bootstrap_case(rng),
        "ar1_recursion (2000 x 1000)": ar1_case(rng),
        "simulate_chunk (4096 paths x 256 months)": simulate_case(rng),
    }
    print(f"{'kernel':44s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, case in cases.items():
        tp, op = best_of(lambda: case(kernels.python), args.repeat)
        tc, oc = best_of(lambda: case(kernels.compiled), args.repeat)
        diff = float(np.nanmax(np.abs(np.asarray(op) - np.asarray(oc))))
        print(f"{name:44s} {tp * 1e3:10.2f} {tc * 1e3:10.2f} {tp / tc:8.1f} {diff:11.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
