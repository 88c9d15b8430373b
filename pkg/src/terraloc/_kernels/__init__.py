"""Hot numeric kernels with two interchangeable backends.

The numba backend JIT-compiles the inner loops; the numpy backend is a
vectorized fallback used when numba is unavailable or when the environment
variable ``TERRALOC_DISABLE_JIT`` is set to a non-empty value other than
"0"/"false". Both backends implement the same contracts and are cross-checked
in the test suite; ``benchmarks/bench_kernels.py`` compares their speed.
"""

import os

__all__ = ["JIT_ENABLED", "match_direct", "visible_mask", "rasterize_max"]


def _jit_requested() -> bool:
    flag = os.environ.get("TERRALOC_DISABLE_JIT", "").strip().lower()
    return flag in ("", "0", "false", "no")


JIT_ENABLED = False
if _jit_requested():
    try:
        from ._numba import match_direct, rasterize_max, visible_mask

        JIT_ENABLED = True
    except ImportError:  # pragma: no cover - numba is an install-time dep
        pass

if not JIT_ENABLED:
    from ._numpy import match_direct, rasterize_max, visible_mask  # noqa: F401
