"""Exception types shared across the package."""


class CurvlabError(Exception):
    """Base class for all package errors."""


class DimensionError(CurvlabError, ValueError):
    """Array shapes or lengths do not match an operation's contract."""


class SingularityError(CurvlabError, ArithmeticError):
    """A matrix that must be inverted is singular or too ill-conditioned."""


class ContractViolation(CurvlabError, ValueError):
    """Input violates a numeric precondition (e.g. symmetry) or output fails a check (e.g. PSD)."""


class UnsupportedLayerError(CurvlabError, TypeError):
    """Operation is not defined for the requested layer type."""


class SizeLimitError(CurvlabError, MemoryError):
    """Materializing a dense result would exceed the configured element cap."""


class ConfigError(CurvlabError, ValueError):
    """Invalid network spec, dataset file or command-line configuration."""
