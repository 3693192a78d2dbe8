import numpy
from setuptools import setup

try:
    from setuptools import Extension

    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "patternflow.kernels._native",
                ["src/patternflow/kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython at build time: install with the pure-NumPy kernel backend only.
    ext_modules = []

setup(ext_modules=ext_modules)
