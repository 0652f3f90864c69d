"""Motion and time analysis of skeleton sequences."""

__version__ = "0.1.0"
