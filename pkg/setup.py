"""Build script for the optional compiled calendar core.

The package works without the extension (a pure-Python calendar backend is
selected at import time); building it just makes reservation-heavy runs
faster.  Compile in place with:

    python setup.py build_ext --inplace
"""

import os

from setuptools import Extension, setup

PYX = "src/cofeesim/slotcal/_core_cy.pyx"

ext_modules = []
if os.path.exists(PYX):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("cofeesim.slotcal._core_cy", [PYX], optional=True)],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
