"""Multi-channel far-field speech enhancement toolkit."""

__version__ = "0.1.0"
