"""Build script for the optional compiled kernels.

The package works without the extension: gaitscore falls back to the pure
NumPy kernels in gaitscore._pytree at import time. Building the extension
just makes forest training and SHAP attribution much faster.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the Cython kernels, but never fail the install over them."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any build failure is non-fatal
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        import warnings

        warnings.warn(
            f"building the gaitscore._ctree extension failed ({exc}); "
            "falling back to the pure-Python kernels",
            RuntimeWarning,
            stacklevel=2,
        )


def make_extensions():
    import numpy as np
    from Cython.Build import cythonize

    ext = Extension(
        "gaitscore._ctree",
        ["src/gaitscore/_ctree.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


if os.environ.get("GAITSCORE_SKIP_EXT"):
    setup()
else:
    setup(cmdclass={"build_ext": OptionalBuildExt}, ext_modules=make_extensions())
