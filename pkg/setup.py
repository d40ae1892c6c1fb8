from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
    import numpy
except ImportError:
    # Falls back to the pure numpy kernels at import time.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "ilgaco._ckernels",
                ["src/ilgaco/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                # No FMA contraction: keeps results bitwise equal to the numpy fallback.
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
