import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

# The compiled kernels are an optional speedup: if the build fails (no
# compiler, no Cython), the package falls back to the numpy implementation
# selected at import time in riscf.backend.
extensions = [
    Extension(
        "riscf._kernels",
        ["src/riscf/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
