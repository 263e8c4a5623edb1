# Configuration file for the Sphinx documentation builder.
#
# For the full list of built-in configuration values, see the documentation:
# https://www.sphinx-doc.org/en/master/usage/configuration.html

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

# -- Project information -----------------------------------------------------

project = 'skyheight'
copyright = '2026, skyheight developers'
author = 'skyheight developers'
release = '1.0.0'

# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.napoleon',
    'sphinx.ext.viewcode',
]

exclude_patterns = ['_build']

# -- Options for HTML output -------------------------------------------------

html_theme = 'alabaster'

# -- Extension configuration -------------------------------------------------

# Docstrings use the Google "Args:/Returns:/Raises:" layout
napoleon_google_docstring = True
napoleon_numpy_docstring = False
