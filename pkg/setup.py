"""Build script for the compiled simulation kernels.

The extension links against numpy's bundled random-distribution library so the
Cython kernels draw from the exact same bit streams as numpy Generators. If
the extension cannot be built the package still works through the pure-numpy
fallback in banditlab.kernels.
"""

import os

import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

random_lib_dir = os.path.join(os.path.dirname(np.random.__file__), "lib")

extensions = [
    Extension(
        "banditlab.kernels._ckernels",
        ["src/banditlab/kernels/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[random_lib_dir],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # fp-contract off: scores must be bit-identical to the numpy fallback,
        # FMA contraction would change the last ulp.
        extra_compile_args=["-O3", "-ffp-contract=off"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
)
