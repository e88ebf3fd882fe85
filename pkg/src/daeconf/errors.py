"""Exception types shared across the package."""


class DaeconfError(Exception):
    """Base class for all package errors."""


class DimensionError(DaeconfError, ValueError):
    """Operand shapes are incompatible."""


class ParameterError(DaeconfError, ValueError):
    """A scalar or configuration argument is out of its valid range."""


class StateError(DaeconfError, RuntimeError):
    """An operation was called in the wrong order (e.g. backward before forward)."""


class FormatError(DaeconfError, ValueError):
    """A serialized file or byte buffer is malformed."""


class UnsupportedVersionError(FormatError):
    """A checkpoint was written by an incompatible format version."""
