"""Build script: compiles the optional Cython kernel core.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compile is tolerated unless MOTIFHEAD_REQUIRE_EXT=1.
Set MOTIFHEAD_NO_EXT=1 to skip compilation entirely.
"""

import os

from setuptools import setup


def _extension_modules():
    if os.environ.get("MOTIFHEAD_NO_EXT") == "1":
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools.extension import Extension
    except ImportError:
        if os.environ.get("MOTIFHEAD_REQUIRE_EXT") == "1":
            raise
        return []
    ext = Extension(
        "motifhead.kernels._core",
        sources=["src/motifhead/kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        # No -ffast-math: accumulation order must stay exactly as written.
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=_extension_modules())
