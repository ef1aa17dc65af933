"""Build script for the optional compiled rasterizer kernel.

The package is fully functional without the extension: rfcnet.scene.raster
falls back to the numpy kernel at import time if rfcnet.scene._raster is
missing.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    np = None
    cythonize = None


class OptionalBuildExt(build_ext):
    """Build the extension if possible; never fail the install over it."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            warnings.warn(f"skipping compiled rasterizer build: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"skipping {ext.name}: {exc}")


if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "rfcnet.scene._raster",
                ["src/rfcnet/scene/_raster.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
