import os

import numpy as np
from setuptools import Extension, setup

# The extension is optional: without Cython or a compiler the package still
# installs and falls back to the numpy kernels.
ext_modules = []
if os.environ.get("GATRAJ_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "gatraj._kernels._ckernels",
                    ["src/gatraj/_kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
