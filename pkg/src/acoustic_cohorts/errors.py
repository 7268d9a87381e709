"""Error taxonomy shared across the pipeline.

Exit-code mapping for the command line lives in `cli`:
usage errors exit 1, data errors exit 2, numeric errors exit 3.
"""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all pipeline errors."""


class UsageError(PipelineError):
    """Bad invocation: unknown flags, missing arguments, invalid axis names."""


class DataError(PipelineError):
    """Bad input data: missing files, malformed records, mismatched ids."""


class NumericError(PipelineError):
    """Numeric preconditions violated: non-finite values, degenerate or insufficient data."""
