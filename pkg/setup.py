import numpy
from setuptools import Extension, setup

# The compiled kernels are an optional speedup: if Cython is missing the
# package still installs and transparently falls back to the numpy kernels
# (see spikederain.backend).
try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "spikederain._kernels",
                sources=["src/spikederain/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
