"""Exception types shared across the pipeline.

The CLI maps each class to a distinct exit code, so keep the hierarchy
small and stable.
"""

from __future__ import annotations


class IvolLabError(Exception):
    """Base class for all domain errors raised by this package."""


class SchemaError(IvolLabError):
    """An input file violates its documented schema (carries row context)."""


class DataError(IvolLabError):
    """In-memory data violates a stated invariant."""


class DegenerateChainError(IvolLabError):
    """An option chain produced a negative term variance or an empty strip."""


class FetchError(IvolLabError):
    """A remote data pull failed after retries."""
