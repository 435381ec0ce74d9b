"""Exception hierarchy shared across the pipeline."""


class OverreactError(Exception):
    """Base class for all package errors."""


class DataError(OverreactError):
    """Input data could not be used (ingest, alignment, insufficient rows)."""


class IngestError(DataError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EmptySeriesError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class AlignmentError(DataError):
    def __init__(self, message, timestamps=()):
        self.timestamps = list(timestamps)
        if self.timestamps:
            shown = ", ".join(str(t) for t in self.timestamps[:5])
            more = "" if len(self.timestamps) <= 5 else f" (+{len(self.timestamps) - 5} more)"
            message = f"{message}: {shown}{more}"
        super().__init__(message)


class ParameterError(OverreactError, ValueError):
    """Invalid configuration or argument value."""


class SchemaError(OverreactError):
    pass


class NotFittedError(OverreactError):
    pass


class DegenerateModelError(OverreactError):
    """A discriminative model was asked to learn from a single class."""


class UndefinedMetricError(OverreactError, ArithmeticError):
    """A metric has a zero denominator; callers must not treat it as 0 or inf."""


class NoSignalError(OverreactError):
    pass


class ConfigError(OverreactError):
    pass
