"""Multi-dimensional polarization inference for social-media users."""

__version__ = "0.1.0"
