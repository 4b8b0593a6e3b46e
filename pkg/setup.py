"""Build script: compiles the optional Cython scan kernel.

The package works without the extension (a pure-NumPy fallback is selected
at import time), so a missing compiler or Cython must not fail the install.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "retrocap.kernels._scan_cy",
                ["src/retrocap/kernels/_scan_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
