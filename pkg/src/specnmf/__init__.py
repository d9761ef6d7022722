"""Supervised non-negative matrix factorization for 1-D count spectra."""
__version__ = "0.1.0"
