"""Predictor-based subspace identification toolkit."""
__version__ = "0.1.0"
