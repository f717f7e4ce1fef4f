"""Semantic exception hierarchy.

DomainError covers mathematical domain violations (never silent NaN);
DataError covers file, manifest, and shape problems. The CLI maps
DataError to exit code 2 and usage problems to exit code 1.
"""


class DepthcalError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(DepthcalError, ValueError):
    """Input outside the mathematical domain of an operation."""


class DataError(DepthcalError):
    """Malformed or inconsistent files, manifests, or array shapes."""
