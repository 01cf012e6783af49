"""Exception hierarchy.

Everything raised deliberately by the package derives from :class:`StllcError`.
The CLI maps :class:`DataError` to exit code 2 and :class:`NumericalError`
to exit code 3.
"""


class StllcError(Exception):
    pass


class DataError(StllcError, ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(StllcError, ArithmeticError):
    """Non-finite values or a solver that failed to reach its tolerance."""


class InvalidSequenceError(DataError):
    pass


class SequenceFormatError(DataError):
    """Container parse failure at a byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class CorruptHeaderError(SequenceFormatError):
    pass


class TruncatedPayloadError(SequenceFormatError):
    pass


class UnsupportedVersionError(SequenceFormatError):
    pass


class InvalidRoiError(DataError):
    pass


class ManifestError(DataError):
    pass


class ConfigError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


class TooFewDescriptorsError(DataError):
    pass


class TooFewClassesError(DataError):
    pass


class EmptyCodeMatrixError(DataError):
    pass


class UnknownLabelError(DataError):
    def __init__(self, labels):
        labels = sorted(set(labels))
        super().__init__("labels not known to the model: " + ", ".join(labels))
        self.labels = labels


class ModelFormatError(DataError):
    pass


class ChecksumMismatchError(ModelFormatError):
    pass


class UnknownVersionError(ModelFormatError):
    pass


class VideoError(DataError):
    """A data error raised while processing one video, tagged with its path."""

    def __init__(self, path, cause):
        super().__init__(f"{path}: {cause}")
        self.path = path


class NonFiniteError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass
