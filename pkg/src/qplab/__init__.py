"""Numerical laboratory for one-frequency quasiperiodic SL(2,R) cocycles."""

__version__ = "0.1.0"
