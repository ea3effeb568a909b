"""Concentration level kappa, sweeps of ell over lambda and lambda_{m,*} brackets."""

from .levels import ConcentrationDiagnostics, Kappa, concentration, kappa, sobolev_constant

__all__ = ["ConcentrationDiagnostics", "Kappa", "concentration", "kappa", "sobolev_constant"]
