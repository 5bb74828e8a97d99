"""Exception hierarchy for tntz.

The CLI maps these onto stable exit codes: usage problems exit 2, data
problems (bad files, malformed containers) exit 3, numeric guards exit 4.
"""


class TntzError(Exception):
    """Base class for all tntz errors."""


class ContractViolationError(TntzError, ValueError):
    """A documented precondition of an operation was violated."""


class StructuralError(TntzError, ValueError):
    """A tensor network is internally inconsistent (rank chain, node shapes)."""


class InterleavedIndexingError(ContractViolationError):
    """A list index is separated from another list index by a basic index."""


class GuardExceededError(TntzError, RuntimeError):
    """A numeric size/memory guard would be exceeded."""


class EvaluationError(TntzError, RuntimeError):
    """A black-box function failed or returned non-finite values."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = None if index is None else tuple(int(i) for i in index)


class DataError(TntzError, ValueError):
    """Base class for file/container problems."""


class MagicError(DataError):
    """Container file does not start with the expected magic bytes."""


class ChecksumError(DataError):
    """Container payload does not match its declared checksum."""


class SizeError(DataError):
    """Declared sizes are inconsistent with the payload length."""
