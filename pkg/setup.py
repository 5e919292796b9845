"""Builds the optional compiled cascade kernel.

The package falls back to the numpy kernel when the extension is missing,
so a failed compile leaves a working (slower) install.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("SUPPLYNET_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "supplynet.esri._cascade",
                    ["src/supplynet/esri/_cascade.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
