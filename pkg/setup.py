import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

compile_args = ["-O3", "-fopenmp", "-fno-math-errno", "-funroll-loops",
                "-ffp-contract=off"]
if os.environ.get("CARVEGRAPH_NATIVE", "1") == "1":
    compile_args.append("-march=native")

extensions = [
    Extension(
        "carvegraph._kernels",
        ["src/carvegraph/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=compile_args,
        extra_link_args=["-fopenmp"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
