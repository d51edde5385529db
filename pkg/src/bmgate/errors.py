"""Exception hierarchy shared by all bmgate modules."""


class BmgateError(Exception):
    """Base class for every error raised by this package."""


class DomainError(BmgateError, ValueError):
    """An argument lies outside the domain of the function."""


class DegenerateInputError(BmgateError, ValueError):
    """The inputs are valid individually but leave the result undefined."""


class CurveError(BmgateError, ValueError):
    """Base class for curve-file parse and validation failures."""


class CurveFormatError(CurveError):
    """Malformed header or row in a curve file."""


class CurveOrderError(CurveError):
    """Time samples are not strictly increasing."""


class CurveRangeError(CurveError):
    """An efficiency or angle is outside its physical range."""


class WindowConsistencyError(CurveError):
    """The bit-mapped window is misplaced or theta is nonzero inside it."""


class ConfigError(BmgateError, ValueError):
    """Invalid run configuration."""


class AnalysisError(BmgateError):
    """The requested analysis has no meaningful answer for these inputs."""
