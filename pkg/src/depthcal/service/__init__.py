"""FastAPI service wrapping the calibration toolkit."""

from . import handlers, schemas

__all__ = ["handlers", "schemas"]
