"""Kernel backend chosen at import time.

The Cython extension is used when it was built; otherwise the numpy versions in
``_kernels_py`` are used.  Setting ``FLOWTURBO_PURE_PYTHON=1`` forces the fallback.
"""
import os

if os.environ.get("FLOWTURBO_PURE_PYTHON", "") not in ("", "0"):
    from ._kernels_py import *  # noqa: F401,F403
    BACKEND = "python"
else:
    try:
        from ._ext import *  # noqa: F401,F403
        BACKEND = "cython"
    except ImportError:
        from ._kernels_py import *  # noqa: F401,F403
        BACKEND = "python"

__all__ = [
    "BACKEND",
    "affine_table_silu",
    "affine_table",
    "bias_silu",
    "bias_silu_keep",
    "silu_into",
    "silu_backward",
    "cfg_combine",
    "euler_step",
    "heun_step",
    "dense_narrow",
]
