"""Exception hierarchy shared by every module of the package."""


class DvaeError(Exception):
    """Base class for all package errors."""


class ShapeError(DvaeError, ValueError):
    pass


class DomainError(DvaeError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class NonFiniteError(DvaeError, FloatingPointError):
    pass


class NotScalarError(DvaeError, ValueError):
    pass


class DisconnectedError(DvaeError, RuntimeError):
    """backward() was called on a value that is not part of any graph."""


class EmptySequenceError(DvaeError, ValueError):
    pass


class TooShortError(DvaeError, ValueError):
    pass


class LengthMismatchError(DvaeError, ValueError):
    pass


class NonFiniteLossError(DvaeError, FloatingPointError):
    def __init__(self, message, batch_index=None):
        super().__init__(message)
        self.batch_index = batch_index


class IoError(DvaeError, OSError):
    """A file could not be read or written."""


class CheckpointIOError(IoError):
    pass


class VersionMismatchError(DvaeError, ValueError):
    pass


class CorruptChecksumError(DvaeError, ValueError):
    pass


class UnsupportedFormatError(DvaeError, ValueError):
    pass


class ConfigError(DvaeError, ValueError):
    pass
