"""Exception types shared across the pipeline stages."""


class ClinpredError(Exception):
    """Base class for all pipeline errors."""


class ConfigurationError(ClinpredError):
    """A config or schema references something that does not exist."""


class IngestionError(ClinpredError):
    """The cohort file could not be parsed."""


class PipelineError(ClinpredError):
    """A pipeline stage received data it cannot work with."""


class SchemaMismatchError(ClinpredError):
    """Feature layout of the input does not match the fitted state."""


class TrainingDivergedError(ClinpredError):
    """Loss became NaN/Inf during training."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class UndefinedMetricError(ClinpredError):
    """Metric is undefined for the given labels (e.g. single class)."""


class ValidationError(ClinpredError):
    """A scoring request contained invalid input."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key
