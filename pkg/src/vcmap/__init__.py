"""Visibility color maps: where in the plane a target segment is seen, and how well."""

__version__ = "0.1.0"
