"""Compressed sensing with prior information via correlation maximization."""

__version__ = "0.1.0"
