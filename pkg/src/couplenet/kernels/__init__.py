"""Backend selection for the hot pooling kernels.

The compiled Cython extension is preferred; the numpy implementation is
the reference fallback. Set COUPLENET_BACKEND=python to force the
fallback (used by the backend-equivalence tests and the benchmark).
"""

import os

from . import python_backend

if os.environ.get("COUPLENET_BACKEND", "").lower() == "python":
    _impl = python_backend
    BACKEND = "python"
else:
    try:
        from . import _cykernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = python_backend
        BACKEND = "python"

roi_max_pool = _impl.roi_max_pool
roi_max_unpool = _impl.roi_max_unpool
psroi_avg_pool = _impl.psroi_avg_pool
psroi_avg_unpool = _impl.psroi_avg_unpool
