import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "evosnn._ckernel",
        ["src/evosnn/_ckernel.pyx"],
        include_dirs=[np.get_include()],
        # no FMA contraction or fast-math: results must match the Python kernel bit for bit
        extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
