import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        Extension(
            "streamgamm._kernels._filter_cy",
            ["src/streamgamm/_kernels/_filter_cy.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        ),
        language_level=3,
    )
except ImportError:
    # No Cython available: install pure-Python only, the kernel package
    # falls back to the numpy implementation at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
