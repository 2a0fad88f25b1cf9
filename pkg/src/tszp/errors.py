"""Exception hierarchy shared by every stage of the compressor."""


class TszpError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(TszpError, ValueError):
    """Grid dimensions disagree with the data or with another grid."""


class ValidationError(TszpError, ValueError):
    """Input values or parameters violate a documented precondition."""


class QuantizationOverflowError(ValidationError):
    """A bin index would not fit in a signed 32-bit integer."""


class CorruptStreamError(TszpError):
    """A compressed stream is malformed, truncated or inconsistent."""


class BadMagicError(CorruptStreamError):
    pass


class UnsupportedVersionError(CorruptStreamError):
    pass


class TruncatedStreamError(CorruptStreamError):
    pass


class CorruptMetadataError(CorruptStreamError):
    """Topology side-channel does not line up with the critical-point map."""
