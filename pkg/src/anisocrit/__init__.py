"""Numerical toolkit for anisotropic critical-exponent problems of Brezis-Nirenberg type."""

__version__ = "0.1.0"
