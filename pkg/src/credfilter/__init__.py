"""Filtering-based pricing in a structural credit model with incomplete information."""

__version__ = "0.1.0"
