"""Build script: compiles the optional grid-network kernel extension.

The package works without the extension (a NumPy fallback is selected at
import time); compilation failures therefore only cost speed, not
functionality.  Build in place for development with:

    python setup.py build_ext --inplace
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Degrade to the pure-Python kernels when compilation fails."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, broken toolchain, ...
            print(f"WARNING: compiled kernels skipped ({exc}); "
                  "falling back to NumPy implementation")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"WARNING: building {ext.name} failed ({exc}); "
                  "falling back to NumPy implementation")


try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "fdsic._kernels._gridnet_cy",
                ["src/fdsic/_kernels/_gridnet_cy.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions, cmdclass={"build_ext": OptionalBuildExt})
