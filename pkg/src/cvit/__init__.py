"""Contextual vision transformer for hourly accident-risk maps."""

__version__ = "0.1.0"
