"""Shared exception types with a stable CLI exit-code mapping."""


class ValidationError(Exception):
    """Malformed input, schema violation or broken invariant (exit code 1)."""


class IOFailure(Exception):
    """Filesystem or encoding failure, reported with the path (exit code 2)."""
