"""Exception types raised across the package."""


class DarnError(Exception):
    """Base class for all package errors."""


class DimensionError(DarnError, ValueError):
    """An array does not have the shape the architecture requires."""


class EnumerationLimitError(DarnError, ValueError):
    """Exact enumeration was requested for a representation that is too large."""


class DataError(DarnError, ValueError):
    """A data file or in-memory dataset is malformed."""


class BadMagicError(DataError):
    pass


class TruncatedFileError(DataError):
    pass


class UnsupportedTypeError(DataError):
    pass


class NonBinaryError(DataError):
    pass


class CheckpointError(DataError):
    pass


class NumericError(DarnError, FloatingPointError):
    """A non-finite value appeared where a finite one is required."""
