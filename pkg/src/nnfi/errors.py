"""Exception hierarchy shared across the package."""


class NnfiError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(NnfiError):
    """Shape, bounds or wiring mismatch detected before any computation."""


class ModelFormatError(NnfiError):
    """A model or trace file violates the NNFI container format."""


class BadMagicError(ModelFormatError):
    pass


class UnsupportedVersionError(ModelFormatError):
    pass


class TruncatedFileError(ModelFormatError):
    pass


class PayloadMismatchError(ModelFormatError):
    pass


class DatasetError(NnfiError):
    """An IDX dataset file is malformed or the image/label files disagree."""
