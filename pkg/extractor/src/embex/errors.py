"""Exception types raised by the extractor."""


class ExtractorError(Exception):
    """Base class for all errors raised by this package."""


class TranscriptError(ExtractorError):
    """Malformed transcript file or non-increasing onsets."""


class TokenizationMismatch(ExtractorError):
    """A word cannot be converted to at least one token."""


class EmptyVocabulary(ExtractorError):
    """A static vector table contains no usable rows."""


class VectorTableError(ExtractorError):
    """A static vector table row is malformed or inconsistent."""


class BundleMismatch(ExtractorError):
    """An existing output bundle does not match the words being written."""


class ModelUnavailable(ExtractorError):
    """The requested model id cannot be resolved or loaded."""
