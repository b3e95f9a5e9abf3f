"""Exception types shared across the package.

The CLI maps these onto stable exit codes; see ``fdsic.cli``.
"""


class ConfigError(ValueError):
    """Invalid configuration value or combination."""


class SingularMatrixError(ValueError):
    """Least-squares regressor matrix is (numerically) rank deficient."""

    def __init__(self, message: str, cond: float | None = None):
        super().__init__(message)
        self.cond = cond


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class UndefinedMetricError(ValueError):
    """Metric is undefined for the given inputs (e.g. zero signal power)."""


class DatasetFormatError(ValueError):
    """A dataset file could not be parsed."""


class BadMagicError(DatasetFormatError):
    """File does not start with the expected magic bytes."""


class TruncatedPayloadError(DatasetFormatError):
    """File ends before the payload promised by its header."""


class SampleCountError(DatasetFormatError):
    """Payload size disagrees with the declared sample count."""


class ModelFormatError(ValueError):
    """A model file could not be parsed."""


class IncompatibleModelError(ValueError):
    """Model and dataset disagree on a structural property (memory length)."""
