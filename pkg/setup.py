import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; the numpy fallback is used at runtime
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("ESCAPEDIM_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "escapedim._kernels",
                ["src/escapedim/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-fopenmp"],
                extra_link_args=["-fopenmp"],
            )
        ],
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )

setup(ext_modules=ext_modules)
