"""Shared exception types."""


class ValidationError(Exception):
    """Bad input data or configuration: malformed files, missing resources,
    mismatched dimensions. The CLI maps this to exit code 2."""
