"""Exception types shared by the library and the CLI."""

from __future__ import annotations


class CrescentError(Exception):
    """Base class for all library errors."""


class InvalidArgument(CrescentError):
    """An argument violates a documented precondition."""


class ValidationError(CrescentError):
    """Data fails a content check (non-finite coordinate, bad shape)."""


class ParseError(CrescentError):
    """A file could not be parsed; carries the offending line or byte offset."""

    def __init__(self, message: str, *, line: int | None = None, byte: int | None = None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if byte is not None:
            loc.append(f"byte {byte}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.line = line
        self.byte = byte


class CapacityError(CrescentError):
    """A tree split violates one of the buffer-capacity inequalities.

    ``equation`` is 1 for the top-tree bound (2^ht - 1 <= S) and 2 for the
    sub-tree bound (2^(H - ht + 1) - 1 <= S). ``ht_range`` is the permissible
    closed range for the top-tree height given H and S, or None if empty.
    """

    def __init__(self, message: str, equation: int, ht_range: tuple[int, int] | None):
        super().__init__(message)
        self.equation = equation
        self.ht_range = ht_range
