"""Build script for the optional compiled moment-accumulation core.

The extension is a performance accelerator only: if Cython or a C compiler
is unavailable the build degrades to the pure NumPy backend, which is
selected automatically at import time.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Try to build the accelerator; fall back to pure Python on failure."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, broken toolchain, ...
            self._announce_fallback(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._announce_fallback(exc)

    @staticmethod
    def _announce_fallback(exc):
        print(
            f"WARNING: building the roughcov._fast._accel extension failed ({exc}); "
            "the pure NumPy backend will be used instead.",
            file=sys.stderr,
        )


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        print(
            f"WARNING: {exc}; skipping the compiled backend.",
            file=sys.stderr,
        )
        return []
    ext = Extension(
        "roughcov._fast._accel",
        sources=["src/roughcov/_fast/_accel.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
