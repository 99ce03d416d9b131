class EikonalError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(EikonalError, ValueError):
    """Invalid or incomplete problem, solver or experiment configuration."""


class GridRangeError(EikonalError, IndexError):
    """Index outside the valid range of a grid family or subdomain."""


class ShapeMismatchError(EikonalError, ValueError):
    """Two fields that must share a node set do not."""
