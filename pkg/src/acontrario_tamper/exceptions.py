"""Exception hierarchy shared by every module of the package."""


class TamperError(Exception):
    """Base class for all errors raised by this package."""


class ImageTooSmall(TamperError, ValueError):
    """The image cannot hold a single analysis patch."""


class ShapeError(TamperError, ValueError):
    """Array or grid dimensions do not match what the operation needs."""


class DomainError(TamperError, ValueError):
    """An argument is outside the domain where the operation is defined."""


class ConfigError(TamperError, ValueError):
    """Invalid configuration value."""


class FormatError(TamperError, ValueError):
    """A file could not be parsed in the expected format."""


class DegenerateEval(TamperError, ValueError):
    """Evaluation input lacks one of the two classes."""
