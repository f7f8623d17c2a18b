"""Constant-rank operators, spectral projections and thin-film micromagnetics."""

__version__ = "0.1.0"
