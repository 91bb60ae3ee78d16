"""Locally modified parametric finite elements for elliptic interface problems."""

__version__ = "0.1.0"
