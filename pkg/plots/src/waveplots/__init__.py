"""Render figures from actionwave artifact files.

The figures read only the committed CSV/JSON artifact schemas and never
recompute physics; identical inputs produce byte-identical PNGs.
"""

from .figures import FigureSpec, SchemaError, render

__version__ = "0.1.0"
