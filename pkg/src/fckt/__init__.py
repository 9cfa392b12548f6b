"""Joint aspect extraction and sentiment prediction with boundary-distribution transfer."""

__version__ = "0.1.0"
