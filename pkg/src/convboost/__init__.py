"""Hybrid CNN feature extractor + second-order gradient-boosted trees."""

__version__ = "0.1.0"
