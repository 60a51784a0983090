"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: usage problems exit 1, bad input
data exits 2, and broken internal invariants exit 3.
"""


class NotetopicsError(Exception):
    """Base class for all pipeline errors."""


class DataError(NotetopicsError):
    """Input data is missing, unreadable, or violates its contract."""


class ModelFormatError(DataError):
    """A model file is truncated, corrupt, or from an unknown format version."""


class InvariantError(NotetopicsError):
    """An internal consistency check failed."""
