"""Exception hierarchy shared by the library and the command-line tool."""


class DSFGANError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DSFGANError, ValueError):
    """Invalid configuration: unknown column, bad hyper-parameter, malformed file."""


class DataError(DSFGANError, ValueError):
    """The data itself is unusable (missing file, no rows left after cleaning)."""


class NonFiniteError(DSFGANError, FloatingPointError):
    """A forward value or a loss became NaN or infinite."""


class FoldError(DSFGANError, RuntimeError):
    """A cross-validation fold failed during an experiment."""

    def __init__(self, fold, cause):
        self.fold = fold
        self.cause = cause
        super().__init__(f"fold {fold} failed: {type(cause).__name__}: {cause}")
