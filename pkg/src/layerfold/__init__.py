"""Layer-folding models."""

__version__ = "0.1.0"
