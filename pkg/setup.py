"""Build hooks for the optional compiled split-search kernel.

The package works without the extension: erd._kernels falls back to a
numpy implementation at import time. The extension is declared optional
so a missing compiler degrades the install instead of failing it.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "erd._kernels._split",
                ["src/erd/_kernels/_split.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # keep float math identical to the numpy fallback: no fma
                extra_compile_args=["-ffp-contract=off"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
