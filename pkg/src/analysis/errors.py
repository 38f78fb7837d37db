"""Exception hierarchy shared by the estimators, ingestion and the pipeline."""


class HurstError(ValueError):
    """Base class for every error raised by this package."""


class InvalidArgumentError(HurstError):
    pass


class InvalidLagError(HurstError):
    pass


class DegenerateSeriesError(HurstError):
    pass


class InvalidConfigError(HurstError):
    pass


class DegenerateVarianceError(HurstError):
    pass


class InsufficientRangeError(HurstError):
    pass


class InsufficientDataError(HurstError):
    pass


class OneSidedSupportError(HurstError):
    pass


class SynthesisError(HurstError):
    pass


class UnsupportedKindError(HurstError):
    pass


class ParseError(HurstError):
    """Raised for rows that do not parse under the ingestion schema."""

    def __init__(self, message: str, line: int = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnfillableGapError(HurstError):
    pass


class OrderingError(HurstError):
    pass


class RangeError(HurstError):
    pass


class ConfigError(HurstError):
    pass
