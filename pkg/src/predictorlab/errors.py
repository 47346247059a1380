"""Exception hierarchy shared by the library and the command-line front end."""


class PredictorLabError(Exception):
    """Base class for all library errors."""


class DimensionError(PredictorLabError, ValueError):
    """Array shapes are inconsistent with the operation."""


class RangeError(PredictorLabError, OverflowError):
    """A result does not fit in double precision."""


class SingularMatrixError(PredictorLabError, ArithmeticError):
    """A linear system is singular to working precision.

    Attributes
    ----------
    pivot : int
        Zero-based column index at which elimination broke down.
    """

    def __init__(self, pivot, message=None):
        self.pivot = pivot
        super().__init__(message or f"matrix is singular to working precision at pivot {pivot}")


class ConfigurationError(PredictorLabError, ValueError):
    """Invalid simulation or scenario configuration.

    ``field`` names the offending entry (dotted path) when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DomainError(PredictorLabError, ValueError):
    """Parameters lie outside the domain where an analysis is defined."""


class DivergenceError(PredictorLabError, RuntimeError):
    """The simulated state left the representable envelope.

    The partially recorded trace is kept on ``trace``.
    """

    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)
