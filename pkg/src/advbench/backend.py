"""Kernel backend selection.

ADVBENCH_BACKEND picks the implementation of the hot kernels:

    numba   numba @njit loops (error if numba is unavailable)
    numpy   pure-numpy vectorized fallback
    auto    numba when importable, else numpy (default)

Resolved once at import; BACKEND records the choice.  Both backends obey the
same contracts but may differ in the last floating-point bits, so
byte-reproducibility guarantees hold per backend.
"""

import os

from . import _kernels_numpy

_choice = os.environ.get("ADVBENCH_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"ADVBENCH_BACKEND={_choice!r}: expected 'auto', 'numba' or 'numpy'"
    )

if _choice == "numpy":
    _impl = _kernels_numpy
    BACKEND = "numpy"
else:
    try:
        from . import _kernels_numba as _impl
        BACKEND = "numba"
    except ImportError:
        if _choice == "numba":
            raise
        _impl = _kernels_numpy
        BACKEND = "numpy"

conv2d_forward = _impl.conv2d_forward
conv2d_grad_input = _impl.conv2d_grad_input
conv2d_grad_weights = _impl.conv2d_grad_weights
median_filter2d = _impl.median_filter2d
blur_separable = _impl.blur_separable
rotate_bilinear = _impl.rotate_bilinear
jsma_best_pair = _impl.jsma_best_pair
