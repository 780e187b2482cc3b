"""Command-line interface for expanderlab."""

__version__ = "0.1.0"
