import os

import numpy
from setuptools import setup

ext_modules = []
if not os.environ.get("STRATPERM_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "stratperm._kernels",
                    ["src/stratperm/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # Cython missing: install the pure-Python fallback only
        ext_modules = []

setup(ext_modules=ext_modules)
