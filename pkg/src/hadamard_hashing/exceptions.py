"""Exception hierarchy shared by every hadamard_hashing module."""


class HashingError(Exception):
    """Base class for errors raised by hadamard_hashing."""


class ValidationError(HashingError, ValueError):
    """Arguments, shapes or preconditions are not satisfied."""


class InsufficientClassError(ValidationError):
    """A class does not hold enough items to fill its split quota."""

    def __init__(self, class_index, required, available, part='query/train'):
        self.class_index = class_index
        self.required = required
        self.available = available
        super().__init__(
            f"Class {class_index} has {available} items but the {part} quota needs {required}."
        )


class FileFormatError(HashingError):
    """A binary file does not follow its declared format."""

    def __init__(self, message, path=None):
        self.path = path
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class BadMagicError(FileFormatError):
    pass


class UnsupportedVersionError(FileFormatError):
    pass


class TruncatedFileError(FileFormatError):
    pass


class NumericError(HashingError, ArithmeticError):
    """A loss or parameter became NaN or infinite."""
