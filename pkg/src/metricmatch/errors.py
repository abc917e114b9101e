"""Exception hierarchy.

Everything raised on purpose derives from :class:`MetricMatchError`. The CLI
maps :class:`InputError` subclasses to exit code 1 and everything else to 2.
"""


class MetricMatchError(Exception):
    """Base class for all package errors."""


class InputError(MetricMatchError):
    """Bad user input: files, schemas, configs, flags."""


class SchemaError(InputError):
    pass


class DataParseError(InputError):
    def __init__(self, message: str, row: int | None = None, col: str | None = None):
        super().__init__(message)
        self.row = row
        self.col = col


class ValidationError(InputError):
    pass


class SpecError(InputError):
    """Invalid generator or method specification."""


class ConfigError(InputError):
    pass


class DivergenceError(MetricMatchError):
    """Training produced a non-finite loss."""


class ConvergenceError(MetricMatchError):
    pass


class SeparationError(ConvergenceError):
    def __init__(self, message: str, direction=None):
        super().__init__(message)
        self.direction = direction


class RankDeficiencyError(MetricMatchError):
    def __init__(self, message: str, columns=()):
        super().__init__(message)
        self.columns = list(columns)


class DegenerateEmbeddingError(MetricMatchError):
    """Every column of a matching space was pruned."""


class MatchingError(MetricMatchError):
    pass


class BenchError(MetricMatchError):
    pass
