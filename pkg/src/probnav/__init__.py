"""Probabilistic trajectory planning among static and interactive dynamic obstacles.

The pipeline plans in four stages: goal selection on a desired reference
trajectory, a multi-objective discrete search over motion primitives, a
piecewise polynomial smoothing step, and a continuous-time validity check.
"""

__version__ = "0.1.0"

from .kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
