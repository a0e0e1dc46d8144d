"""Hot per-round kernels.

The compiled ``_core`` extension is used when it was built; otherwise the
numpy ``_fallback`` is imported. Setting ``BANDITNET_PURE_PYTHON=1`` forces
the fallback.
"""

import os

from banditnet._kernels import _fallback

if os.environ.get("BANDITNET_PURE_PYTHON"):
    _impl = _fallback
else:
    try:
        from banditnet._kernels import _core as _impl
    except ImportError:  # extension not built
        _impl = _fallback

BACKEND = "cython" if _impl is not _fallback else "python"

project_simplex_rows = _impl.project_simplex_rows
queue_step = _impl.queue_step
grid_act = _impl.grid_act
grid_feed = _impl.grid_feed

__all__ = [
    "BACKEND",
    "project_simplex_rows",
    "queue_step",
    "grid_act",
    "grid_feed",
]
