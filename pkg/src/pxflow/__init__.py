"""Finite elements for steady flows with a variable power-law index."""

__version__ = "0.1.0"
