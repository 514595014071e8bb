import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("RDCBF_NO_EXTENSION") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # pure-Python install; rdcbf.kernels falls back
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "rdcbf._ckernels",
                    ["src/rdcbf/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
