"""Flow-matching sampling acceleration on toy data."""
__version__ = "0.1.0"
