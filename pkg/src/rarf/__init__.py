"""Retrieval-augmented, multi-resolution forecasting for weather stations."""

__version__ = "0.1.0"
