"""Shared helpers and error taxonomy for the binary file formats."""

from __future__ import annotations


class FormatError(ValueError):
    """Base class for binary-format errors."""


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedError(FormatError):
    def __init__(self, what: str, expected: int, actual: int):
        super().__init__(f"truncated while reading {what}: expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


def read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedError(what, n, len(data))
    return data
