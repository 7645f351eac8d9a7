"""Fitting SIR transmission models to daily online-interest time series."""

__version__ = "0.1.0"
