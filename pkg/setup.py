"""Build script: compiles the optional geometry kernel extension.

If Cython or a C compiler is unavailable the build falls back to the
pure-Python kernels in probnav.kernels._pure.
"""
from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/probnav/kernels/_core.pyx"],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-time only
    print(f"skipping compiled kernels ({exc}); pure-Python fallback will be used")

setup(ext_modules=ext_modules)
