"""Build the optional compiled round loop; the package works without it."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("TIMING_SIM_NO_EXT") != "1":
    try:
        import numpy  # noqa: F401  (build requirement)
        from Cython.Build import cythonize
        from setuptools import Extension

        ext = Extension(
            "timing_sim._kernel",
            ["src/timing_sim/_kernel.pyx"],
            # no fused multiply-add so results match the pure-Python loop bit for bit
            extra_compile_args=["-O3", "-ffp-contract=off"],
        )
        ext_modules = cythonize([ext], language_level=3)
    except ImportError:
        print("Cython not available; installing the pure-Python round loop only")

setup(ext_modules=ext_modules)
