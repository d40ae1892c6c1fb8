"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback. Set ``ILGACO_PURE_PYTHON=1`` to force the fallback. Both backends
produce bitwise-identical results.
"""
import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("ILGACO_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
sq_distances = _impl.sq_distances
herding_order = _impl.herding_order
maxpool_relu_backward = _impl.maxpool_relu_backward
gather_windows = _impl.gather_windows

__all__ = [
    "BACKEND",
    "maxpool_forward",
    "maxpool_backward",
    "maxpool_relu_backward",
    "gather_windows",
    "sq_distances",
    "herding_order",
]
