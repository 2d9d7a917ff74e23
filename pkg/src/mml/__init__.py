"""Open, replicated music metadata layer."""

__version__ = "0.1.0"
