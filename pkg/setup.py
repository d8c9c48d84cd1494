"""Build script: compiles the optional fast kernels.

The package works without the extension (pure-numpy fallback); any failure
here must not block installation, so the cythonize step is wrapped.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext = Extension(
        "rfforge._kernels._fast",
        ["src/rfforge/_kernels/_fast.pyx"],
        include_dirs=[numpy.get_include()],
        # -ffp-contract=off: no fused multiply-add, so results stay
        # bit-identical to the numpy fallback
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize([ext], language_level="3")
except Exception as exc:  # pragma: no cover - depends on toolchain
    import sys

    print(f"fast kernels skipped ({exc}); using pure-python backend", file=sys.stderr)

setup(ext_modules=ext_modules)
