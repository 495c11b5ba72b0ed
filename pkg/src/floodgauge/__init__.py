"""Floodwater depth estimation from flood photos using reference objects."""

__version__ = "0.1.0"
