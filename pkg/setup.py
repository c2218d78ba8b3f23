import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "depthresp._kernels",
        ["src/depthresp/_kernels.pyx"],
        include_dirs=[np.get_include()],
        # no FMA contraction: compiled and fallback kernels must agree bit for bit
        extra_compile_args=["-O2", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
