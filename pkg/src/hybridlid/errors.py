"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ``DataError`` -> 3, ``InvariantError`` -> 4.
"""


class HybridLidError(Exception):
    """Base class for all package errors."""


class DataError(HybridLidError, ValueError):
    """Malformed or inconsistent input data (files, corpora, models)."""


class InvariantError(HybridLidError, RuntimeError):
    """An internal invariant was violated; indicates a bug, not bad input."""
