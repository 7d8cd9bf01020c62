"""Flat orthonormal coframings with prescribed exterior derivative in dimension 3."""

from . import algebra3, diagnostics, fields, forms, integral_elements, rank1_solver, tableau
from .errors import CoframeError

__all__ = ["algebra3", "diagnostics", "fields", "forms", "integral_elements", "rank1_solver",
           "tableau", "CoframeError"]
__version__ = "0.1.0"
