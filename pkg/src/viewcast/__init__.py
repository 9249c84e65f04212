"""Video view-count prediction from early popularity signals."""

__version__ = "0.1.0"
