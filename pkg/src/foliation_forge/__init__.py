"""Numerical verification of leafwise symplectic constructions on Milnor links."""

__version__ = "0.1.0"
