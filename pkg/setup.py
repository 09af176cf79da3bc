import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SYMDETECT_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "symdetect.kernels._ulsif_c",
                    ["src/symdetect/kernels/_ulsif_c.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
