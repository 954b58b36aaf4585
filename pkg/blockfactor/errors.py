"""
Exception hierarchy. Each error carries the exit code the CLI reports,
the way an HTTP error carries its status code.
"""


class BlockFactorError(ValueError):
    exit_code: int = 1

    def __init__(self, detail: str, exit_code: int | None = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class DataFormatError(BlockFactorError):
    """Malformed CSV: non-binary cell, ragged row, bad header."""

    exit_code = 2


class PartitionMismatchError(BlockFactorError):
    """Partition or model does not line up with the dataset columns."""

    exit_code = 3


class InvalidOptionError(BlockFactorError):
    exit_code = 4


class ComponentTooLargeError(BlockFactorError):
    """A KL component is too large for exact enumeration."""

    exit_code = 4
