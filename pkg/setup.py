import os

import numpy as np
from setuptools import Extension, setup

# PATIENTVEC_NO_EXT=1 builds a pure-Python install (the kernels fall back at import).
ext_modules = []
if not os.environ.get("PATIENTVEC_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "patientvec._ckernels",
                ["src/patientvec/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                # no FMA contraction: keeps results identical to the fallback's operation order
                extra_compile_args=["-O3", "-ffp-contract=off", "-fno-math-errno"],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
