"""Split-search kernel selection.

The compiled Cython kernel and the numpy fallback evaluate the same
floating-point expression tree in the same candidate order, so trained
models are bit-identical whichever one is active. Set ERD_PURE_PYTHON=1
to force the fallback.
"""

import os

BACKEND = "python"

if os.environ.get("ERD_PURE_PYTHON", "") in ("", "0"):
    try:
        from erd._kernels._split import best_split  # compiled extension

        BACKEND = "cython"
    except ImportError:
        from erd._kernels._split_py import best_split
else:
    from erd._kernels._split_py import best_split

__all__ = ["best_split", "BACKEND"]
