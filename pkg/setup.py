"""Build the optional compiled kernels.

If Cython or a C compiler is unavailable the package still installs and
runs on the numpy fallback.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("lrorder._kernels", ["src/lrorder/_kernels.pyx"],
                   extra_compile_args=["-O3"], libraries=["m"])],
        compiler_directives={"language_level": 3},
        quiet=True,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
