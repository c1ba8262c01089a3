"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension: ``kgic.kernels``
falls back to the numpy reference implementation when the compiled module
is missing or when KGIC_PURE_PYTHON=1 is set.  Building the extension
requires Cython and a C compiler; if either is unavailable the install
proceeds without it.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("kgic.kernels._ckern", ["src/kgic/kernels/_ckern.pyx"])],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    print("warning: Cython not available, building without compiled kernels")

setup(ext_modules=ext_modules)
