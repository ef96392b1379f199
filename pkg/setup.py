"""Builds the optional Cython kernels; the package falls back to NumPy without them."""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("MODALSSE_NO_EXTENSION"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("modalsse._ckernels", ["src/modalsse/_ckernels.pyx"],
                       include_dirs=[numpy.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
