"""Numerical lab for factorizing ground-state projections of gapped 1D chains."""
__version__ = "0.1.0"
