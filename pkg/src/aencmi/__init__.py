"""Adaptive elastic net with conditional-mutual-information penalty weights."""

__version__ = "0.1.0"
