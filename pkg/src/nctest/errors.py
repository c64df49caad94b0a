"""Exceptions shared across the package."""


class DataError(ValueError):
    """Input data violate a documented precondition (bad CSV, missing
    negative controls, non-finite values, and so on)."""
