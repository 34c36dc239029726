"""Energy-constrained Haar sampling and eigenstate-condensation analysis."""

__version__ = "0.1.0"
