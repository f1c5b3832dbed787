"""Game-theoretic security analysis of extensive-form games with symbolic utilities."""

__version__ = "0.1.0"
