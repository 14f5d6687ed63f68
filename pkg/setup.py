import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "conplan._ckern",
    ["src/conplan/_ckern.pyx"],
    include_dirs=[np.get_include()],
    # -ffp-contract=off keeps the C kernels numerically close to the
    # pure-Python fallback (no FMA contraction); do not add -ffast-math.
    extra_compile_args=["-O3", "-ffp-contract=off"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(
    ext_modules=cythonize([ext], compiler_directives={"language_level": "3"}),
)
