"""Hot loops, compiled when the Cython extension is built.

Set ``CAPE_RETURNS_PURE=1`` to force the NumPy fallback.
"""
import os

from . import _pykernels as python

compiled = None
if os.environ.get("CAPE_RETURNS_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled
    except ImportError:  # extension not built
        compiled = None

active = compiled if compiled is not None else python
BACKEND = "cython" if compiled is not None else "python"

ar1_recursion = active.ar1_recursion
augmented_betas = active.augmented_betas
bootstrap_betas = active.bootstrap_betas
simulate_chunk = active.simulate_chunk

__all__ = ["BACKEND", "ar1_recursion", "augmented_betas", "bootstrap_betas", "simulate_chunk",
           "python", "compiled"]
