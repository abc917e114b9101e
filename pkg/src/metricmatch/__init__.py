"""Nearest-neighbor matching on learned matching spaces."""

__version__ = "0.1.0"
