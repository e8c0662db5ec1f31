"""Exception types shared across the toolkit."""


class SigstreamError(Exception):
    """Base class for all toolkit-specific errors."""


class ShapeMismatchError(SigstreamError, ValueError):
    """Operands disagree on dimension, depth, or payload width."""


class ValidationError(SigstreamError, ValueError):
    """Structurally invalid input (out-of-order records, bad grids, ...)."""


class ConfigError(SigstreamError, ValueError):
    """Inconsistent or unsupported configuration."""


class ResourceLimitError(SigstreamError, RuntimeError):
    """A guarded brute-force computation would exceed its enumeration budget."""


class SingularSystemError(SigstreamError, RuntimeError):
    """A linear system is degenerate and no damping was requested."""


class GenerationError(SigstreamError, RuntimeError):
    """Scripted data collection cannot proceed (e.g. unreachable goal)."""


class DataFormatError(SigstreamError, RuntimeError):
    """A persisted file is truncated, corrupt, or has the wrong version."""


class NumericError(SigstreamError, RuntimeError):
    """A computation produced non-finite values."""
