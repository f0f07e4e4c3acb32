import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
    ext_modules = cythonize(
        [
            Extension(
                "nlslab._kernels",
                ["src/nlslab/_kernels.pyx"],
                extra_compile_args=["-O3"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    # pure-python fallback is selected at import time
    ext_modules = []

setup(ext_modules=ext_modules)
