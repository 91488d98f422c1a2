"""Satellite-anchor mobility management for LEO mega-constellations."""

__version__ = "0.1.0"
