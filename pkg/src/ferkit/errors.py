"""Exception hierarchy shared across the toolkit."""


class FerkitError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(FerkitError):
    """An operation received tensors with incompatible shapes."""


class DecodeError(FerkitError):
    """An image byte stream could not be decoded."""


class DatasetError(FerkitError):
    """A labeled dataset could not be loaded from disk."""


class WeightFormatError(FerkitError):
    """A weight container is malformed."""


class BadMagicError(WeightFormatError):
    """The stream does not start with the weight-format magic."""


class UnsupportedVersionError(WeightFormatError):
    """The container declares a version this build cannot read."""


class ChecksumError(WeightFormatError):
    """The container checksum does not match its contents."""


class ConsentError(FerkitError):
    """An image record without consent reached the persistence layer."""
