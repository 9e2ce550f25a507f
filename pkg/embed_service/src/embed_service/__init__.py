"""embed-service: HTTP wrapper around a multilingual sentence-embedding model."""

__version__ = "0.1.0"

from .app import PROBE_SET, create_app, load_model

__all__ = ["__version__", "PROBE_SET", "create_app", "load_model"]
