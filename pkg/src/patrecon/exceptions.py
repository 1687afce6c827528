"""Exception types raised across the package."""


class PatReconError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(PatReconError, ValueError):
    pass


class DomainError(PatReconError, ValueError):
    """A kernel or closed form was evaluated outside its domain."""


class SupportError(PatReconError, ValueError):
    """A phantom primitive leaves the allowed support ball."""


class UnsupportedSpecError(PatReconError, ValueError):
    pass


class FormatError(PatReconError, ValueError):
    """A field/trace file or its sidecar is malformed."""


class PadTooSmallError(PatReconError, ValueError):
    pass


class GeometryMismatchError(PatReconError, ValueError):
    pass


class ConfigError(PatReconError, ValueError):
    pass
