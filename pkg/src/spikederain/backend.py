"""Kernel backend selection.

At import time we prefer the compiled Cython kernels and fall back to the
numpy implementations when the extension is not built.  Set
``SPIKEDERAIN_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and the parity tests).
"""

import os

from . import _kernels_np

if os.environ.get("SPIKEDERAIN_PURE_PYTHON", "0") == "1":
    _impl = _kernels_np
    KERNEL_BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        KERNEL_BACKEND = "cython"
    except ImportError:
        _impl = _kernels_np
        KERNEL_BACKEND = "numpy"

im2col = _impl.im2col
col2im = _impl.col2im
