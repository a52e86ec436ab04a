"""Exception types shared across plekit.

Every error raised on purpose by the library derives from :class:`PlekitError`.
The CLI maps each family to an exit code (see :mod:`plekit.cli`).
"""


class PlekitError(Exception):
    """Base class for all plekit errors."""


# input / output
class IoError(PlekitError, OSError):
    """A file could not be read or written."""


class ParseError(PlekitError, ValueError):
    """A file is not well formed."""


class ValidationError(PlekitError, ValueError):
    """A value violates a type invariant.

    ``field`` names the offending field so callers can report it.
    """

    def __init__(self, field, message=None):
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)


class ConfigError(PlekitError, ValueError):
    """A generator or run configuration is invalid."""


class PreconditionError(PlekitError, ValueError):
    """Arguments violate an operation's precondition."""


# analysis
class AnalysisError(PlekitError):
    """The data cannot support the requested analysis."""


class DegenerateData(AnalysisError):
    pass


class ConstraintInfeasible(AnalysisError):
    pass


class EmptyGrid(AnalysisError):
    pass


class GridMismatch(AnalysisError):
    pass


class TooFewSuccessfulLines(AnalysisError):
    pass


class NonPositiveSeparation(AnalysisError):
    pass


class NonPositiveDt(AnalysisError):
    pass


class EmptyRegion(AnalysisError):
    pass


class RankDeficient(AnalysisError):
    pass


class NonConvergence(PlekitError):
    """The solver hit its iteration cap without meeting the stopping rule."""
