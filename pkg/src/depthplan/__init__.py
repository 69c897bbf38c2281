"""Depth-augmented conservative path planning: synthetic sensing, mapping,
planning and evaluation at desk scale."""

__version__ = "0.1.0"
