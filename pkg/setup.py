"""Build script for the optional compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time); set MORPHKIT_NO_EXT=1 to skip compilation entirely.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("MORPHKIT_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "morphkit._ckernels",
                    ["src/morphkit/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
