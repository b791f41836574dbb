"""Hot numeric kernels with two interchangeable backends.

The numba backend JIT-compiles the inner loops and is the default whenever
numba imports; the pure-numpy backend is a vectorized fallback.  Select one
explicitly with ``LESIONFORGE_BACKEND=numba`` or ``LESIONFORGE_BACKEND=numpy``
in the environment.  The backend only changes how the arithmetic is executed:
gather kernels agree bit-for-bit, summing kernels to reduction-order ulps.
Run ``python benchmarks/bench_kernels.py`` to compare their speed.
"""

from __future__ import annotations

import os
import warnings

from . import numpy_impl

_requested = os.environ.get("LESIONFORGE_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ValueError(
        f"LESIONFORGE_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numpy":
    _impl = numpy_impl
    BACKEND = "numpy"
else:
    try:
        from . import numba_impl as _impl  # noqa: F401

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        warnings.warn("numba unavailable, falling back to pure-numpy kernels",
                      stacklevel=1)
        _impl = numpy_impl
        BACKEND = "numpy"

bilinear_gather = _impl.bilinear_gather
warp_backward = _impl.warp_backward
nearest_warp_labels = _impl.nearest_warp_labels
laplacian_apply = _impl.laplacian_apply
footprint_stats = _impl.footprint_stats
ncc_search = _impl.ncc_search

__all__ = [
    "BACKEND",
    "bilinear_gather",
    "warp_backward",
    "nearest_warp_labels",
    "laplacian_apply",
    "footprint_stats",
    "ncc_search",
]
