"""Geometry kernel backend selection.

Imports the compiled Cython kernels when available, falling back to the
pure-Python implementations. Set PROBNAV_PURE=1 to force the fallback
(used by the kernel benchmark and the backend-equivalence tests).
"""
import os

if os.environ.get("PROBNAV_PURE") == "1":
    from ._pure import (  # noqa: F401
        BACKEND,
        box_support,
        seg_aabb_intersects,
        sweep_pair_intersects,
    )
else:
    try:
        from ._core import (  # type: ignore[attr-defined]  # noqa: F401
            BACKEND,
            box_support,
            seg_aabb_intersects,
            sweep_pair_intersects,
        )
    except ImportError:
        from ._pure import (  # noqa: F401
            BACKEND,
            box_support,
            seg_aabb_intersects,
            sweep_pair_intersects,
        )

__all__ = [
    "BACKEND",
    "box_support",
    "seg_aabb_intersects",
    "sweep_pair_intersects",
]
