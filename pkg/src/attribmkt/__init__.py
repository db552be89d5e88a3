"""Attribute-based linear demand: pricing, product design and welfare."""

__version__ = "0.1.0"
