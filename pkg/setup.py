"""Build script for the optional compiled map-accumulation kernel.

The package works without the extension (a pure NumPy/Python fallback is
selected at import time), so a missing Cython toolchain only costs speed.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "amenet.maps._mapkernel",
                ["src/amenet/maps/_mapkernel.pyx"],
                include_dirs=[numpy.get_include()],
                # fused multiply-adds would break bit-equality with the
                # pure-Python fallback
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
