"""Build script for the optional compiled mining kernel.

The extension links against OpenSSL's libcrypto for one-shot SHA-256.
If Cython or a C toolchain is unavailable the build falls back to the
pure-Python kernel selected at import time by distbsim._kernels.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "distbsim._kernels._native",
                ["src/distbsim/_kernels/_native.pyx"],
                libraries=["crypto"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
