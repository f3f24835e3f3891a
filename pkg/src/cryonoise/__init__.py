"""Cryogenic microwave noise metrology."""

__version__ = "0.1.0"
