"""Logic-controlled discharge summary toolkit."""

__version__ = "0.1.0"
