from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "switchmrac._corecy",
                ["src/switchmrac/_corecy.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": 3},
    )
else:
    # pure-Python fallback still works; the compiled core is optional
    ext_modules = []

setup(ext_modules=ext_modules)
