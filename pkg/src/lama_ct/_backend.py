"""Pick the compiled kernels when available, else the numpy fallback.

Set ``LAMA_CT_PURE=1`` to force the fallback (used by the benchmark and
the backend-agreement tests).
"""

import os

from . import _kernels_py

if os.environ.get("LAMA_CT_PURE", "") not in ("", "0"):
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"
    else:
        BACKEND = "cython"

__all__ = ["kernels", "BACKEND", "_kernels_py"]
