"""Facial emotion recognition toolkit: from-scratch CNN engine, training,
evaluation harness, portable weight format, and a classification service."""

__version__ = "0.1.0"

from .errors import FerkitError, ShapeError

__all__ = ["FerkitError", "ShapeError", "__version__"]
