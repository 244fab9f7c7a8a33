import os

import numpy
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("SDDCONTROL_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext = Extension(
            "sddcontrol._kernels",
            [os.path.join("src", "sddcontrol", "_kernels.pyx")],
            include_dirs=[numpy.get_include()],
            # keep a*b + c unfused so results match the numpy fallback bit for bit
            extra_compile_args=["-O3", "-ffp-contract=off"],
            optional=True,
        )
        ext_modules = cythonize([ext], language_level="3")

setup(ext_modules=ext_modules)
