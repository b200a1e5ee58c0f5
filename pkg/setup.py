"""Build script for the optional compiled kernels.

The extension is optional: if Cython or a C compiler is missing, the
package installs anyway and falls back to the numpy kernels at import.

    pip install -e . --no-build-isolation
    python setup.py build_ext --inplace
"""
import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - depends on toolchain
            print(f"warning: compiled kernels not built ({exc}); using numpy fallback", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover
            print(f"warning: failed to build {ext.name} ({exc})", file=sys.stderr)


def extensions():
    if os.environ.get("SPMIX_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    compile_args = ["-O3", "-fno-math-errno", "-fno-trapping-math",
                    "-fassociative-math", "-fno-signed-zeros", "-fopenmp"]
    if os.environ.get("SPMIX_NATIVE", "1") == "1":
        compile_args.append("-march=native")
    ext = Extension(
        "spmix._kernels",
        ["src/spmix/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=compile_args,
        extra_link_args=["-fopenmp"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
