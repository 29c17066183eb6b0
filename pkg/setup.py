import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SMARTCERT_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # fallback kernels are used at import time
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "smartcert._merkle_ext",
                    ["src/smartcert/_merkle_ext.pyx"],
                    libraries=["crypto"],
                    define_macros=[("OPENSSL_SUPPRESS_DEPRECATED", None)],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
