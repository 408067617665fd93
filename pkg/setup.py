"""Build script for the optional Cython kernels.

If the extension cannot be compiled the package still installs and
``flowturbo.kernels`` falls back to numpy.
"""
import os
import sys
import warnings

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None

compile_args = ["-O3", "-ffast-math"]
link_args = []
if os.environ.get("FLOWTURBO_PORTABLE", "") in ("", "0"):
    compile_args.append("-march=native")
if sys.platform.startswith("linux"):
    # vectorised exp() from glibc's libmvec
    link_args.append("-lmvec")


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            warnings.warn(f"flowturbo: compiled kernels not built ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            warnings.warn(f"flowturbo: failed to build {ext.name} ({exc}); using numpy fallback")


ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "flowturbo._ext",
                ["src/flowturbo/_ext.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=compile_args,
                extra_link_args=link_args,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
