"""Build the optional Cython ADMM kernel.

The package works without it: ``vectorthrust.qp`` falls back to a NumPy
implementation when the compiled module cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("VECTORTHRUST_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "vectorthrust.qp._admm_core",
                    ["src/vectorthrust/qp/_admm_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
