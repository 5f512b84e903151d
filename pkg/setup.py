import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# The compiled kernels are an optional speedup: if the build fails the
# package falls back to the NumPy implementations at import time.
extensions = [
    Extension(
        "semcom.backend._kernels",
        ["src/semcom/backend/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
