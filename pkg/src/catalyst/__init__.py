"""Restart strategies for Las Vegas programs: simulation, analysis, supervision."""
__version__ = "0.1.0"
