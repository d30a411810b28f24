"""Exception hierarchy shared by every resvoc module."""


class ResvocError(Exception):
    """Base class for all errors raised by resvoc."""


class InvalidArgument(ResvocError, ValueError):
    """An argument violates an operation's precondition."""


class DegenerateFrameError(ResvocError, ValueError):
    """A zero-energy frame was asked to carry nonzero energy."""


class FormatError(ResvocError):
    """A file could not be parsed."""


class BadMagicError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class ChecksumError(FormatError):
    pass


class VersionError(FormatError):
    pass


class WavError(FormatError):
    """Malformed or unsupported RIFF/WAVE content."""
