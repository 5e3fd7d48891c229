"""Embedding exporter and external scorer service for the X-DNR engine."""

__version__ = "0.1.0"
