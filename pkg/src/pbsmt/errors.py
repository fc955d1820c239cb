"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: DataError -> 2, DependencyError -> 3.
"""


class DataError(ValueError):
    """Malformed input data or an invalid on-disk artifact."""


class DependencyError(RuntimeError):
    """A pipeline stage was requested before its input artifacts exist."""
