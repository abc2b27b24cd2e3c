"""Error types shared across the kernel."""

from __future__ import annotations


class KernelError(Exception):
    """Base class for all kernel-raised errors."""


class ParseError(KernelError):
    """Raw text is not a member of the requested domain."""


class IndexOutOfBounds(KernelError):
    """Positional row or column selector outside the frame."""


class LabelNotFound(KernelError):
    """Named row or column selector matched nothing."""


class UnknownColumn(KernelError):
    """An operator referenced a column label that does not exist."""


class AmbiguousLabel(KernelError):
    """A label that must name exactly one column names several."""


class ArityMismatch(KernelError):
    """Two frames that must align column-wise do not."""


class IncomparableDomains(KernelError):
    """A comparison was requested between values of incompatible domains."""


class UdfArityViolation(KernelError):
    """A row function returned a row of unexpected width."""


class UdfFailure(KernelError):
    """A row function raised or was applied to a cell it cannot handle."""


class RaggedRow(KernelError):
    """A CSV record has a different field count than the header."""


class QuoteError(KernelError):
    """Malformed quoting in a CSV source, or unserializable cell content."""


class StatementError(KernelError):
    """Statement text could not be parsed or resolved.

    Carries a character position when raised by the statement parser.
    """

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position
