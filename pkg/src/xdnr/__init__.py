"""Cross-lingual debunked-narrative retrieval engine and evaluation harness."""

__version__ = "0.1.0"
