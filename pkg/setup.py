from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:
    # Without Cython the package still installs; the numpy fallback kernels
    # are selected at import time.
    extensions = []
else:
    extensions = cythonize(
        [
            Extension(
                "panoptic._kernels._native",
                ["src/panoptic/_kernels/_native.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
