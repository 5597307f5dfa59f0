"""Builds the optional compiled kernels; the package runs without them."""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("DMTSIM_NO_EXT", "") in ("", "0"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "dmtsim._kernels_c",
                    sources=["src/dmtsim/_kernels_c.pyx"],
                    # keep results bit-identical to the numpy fallback
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            language_level=3,
        )

setup(ext_modules=ext_modules)
