"""Build script for the optional compiled kernels.

The package works without the extension (a pure-numpy backend is selected at
import time), so any failure here is reported but not fatal.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, broken toolchain, ...
            print(f"warning: compiled kernels not built ({exc}); "
                  "the pure-Python backend will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed ({exc}); "
                  "the pure-Python backend will be used")


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    random_lib = os.path.join(os.path.dirname(numpy.random.__file__), "lib")
    ext = Extension(
        "snvsim._backend._kernels",
        ["src/snvsim/_backend/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        library_dirs=[random_lib],
        libraries=["npyrandom"],
        # -ffp-contract=off keeps the compiled arithmetic bit-identical to the
        # numpy fallback (no fused multiply-add in the accumulation loops).
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
