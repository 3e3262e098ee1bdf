"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters or configuration; ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DimensionError(ValueError):
    """Array shapes or grids do not match."""


class SolverError(RuntimeError):
    """An iterative solve failed; carries the residual history."""

    def __init__(self, message, history=()):
        self.history = list(history)
        super().__init__(message)


class ConstructionError(RuntimeError):
    """An object could not be built (e.g. the cut-off radius search overflowed)."""


class RefusalError(ValueError):
    """The input does not meet the preconditions of an estimator."""
