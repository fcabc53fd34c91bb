"""Exception hierarchy shared by every dermaug module."""


class DermaugError(Exception):
    """Base class for all data-level failures raised by the toolkit."""


# image-core
class NotFoundError(DermaugError):
    pass


class UnsupportedFormatError(DermaugError):
    pass


class CorruptHeaderError(DermaugError):
    pass


class DermaugIOError(DermaugError):
    pass


class DimensionMismatchError(DermaugError):
    pass


# geometric / warp
class EmptyMaskError(DermaugError):
    pass


class DegenerateMaskError(DermaugError):
    pass


class OutOfBoundsError(DermaugError):
    pass


class SingularSystemError(DermaugError):
    pass


# color
class InsufficientPixelsError(DermaugError):
    pass


# dataset
class TooFewSamplesError(DermaugError):
    pass


class BadKError(DermaugError):
    pass


class EmptyClassError(DermaugError):
    pass


class ManifestError(DermaugError):
    pass


# committee
class IdSetMismatchError(DermaugError):
    pass


class EmptyCommitteeError(DermaugError):
    pass


class DegenerateLabelsError(DermaugError):
    pass
