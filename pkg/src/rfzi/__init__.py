"""Random-forest variable selection and zero-inflated count regression."""

__version__ = "0.1.0"
