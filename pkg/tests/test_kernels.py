import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cape_returns import kernels
from cape_returns.regression import augmented_regression
from cape_returns.synthetic import predictive_system
from cape_returns.validate import kernel_equivalence

needs_ext = pytest.mark.skipif(kernels.compiled is None, reason="compiled extension not built")


def test_python_betas_match_reference():
    y, x = predictive_system(80, 6, beta=0.1, rng=1)
    got = kernels.python.augmented_betas(y, x)
    want = [augmented_regression(y[b], x[b]).beta_c for b in range(6)]
    np.testing.assert_allclose(got, want, rtol=1e-9)


@needs_ext
def test_compiled_matches_python():
    assert kernel_equivalence(seed=3) <= 1e-9


@needs_ext
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(12, 120), rho=st.floats(-0.9, 0.999))
def test_bootstrap_kernels_agree(seed, n, rho):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal(n), rng.standard_normal(n)
    idx = rng.integers(0, n, (8, n))
    x0 = rng.standard_normal(8)
    a = kernels.python.bootstrap_betas(u, v, idx, x0, 0.01, 0.1, rho)
    b = kernels.compiled.bootstrap_betas(u, v, idx, x0, 0.01, 0.1, rho)
    np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-10)


def test_pure_fallback_selectable():
    code = "from cape_returns import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, CAPE_RETURNS_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
