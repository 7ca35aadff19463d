"""Build script: compiles the ray-march / field kernels when Cython is available.

The package works without the extension (a vectorized NumPy fallback is
selected at import time), so a failed or skipped build is not fatal.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("VOLSYNTH_SKIP_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "volsynth._kernels",
                    sources=["src/volsynth/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
