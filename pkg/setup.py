"""Build hook for the optional compiled kernels.

The package works without a C compiler: if cythonizing fails, the
pure numpy fallback in ``artifact._kernels_py`` is used at import time.
"""
import os
import sys

from setuptools import setup

ext_modules = []
if os.environ.get("ARTIFACT_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "artifact._kernels",
                    ["src/artifact/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except Exception as exc:  # pragma: no cover - build environment dependent
        print(f"compiled kernels disabled: {exc}", file=sys.stderr)
        ext_modules = []

setup(ext_modules=ext_modules)
