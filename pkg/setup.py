"""Builds the optional compiled kernel extension.

The package works without it (a numpy fallback is selected at import); the
extension just makes the scan-matching and grid-update hot loops fast.
"""

import os

from setuptools import Extension, setup

EXT_SOURCE = os.path.join("src", "packmap", "kernels", "_core.pyx")


def extensions():
    if not os.path.exists(EXT_SOURCE):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "packmap.kernels._core",
        [EXT_SOURCE],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions())
