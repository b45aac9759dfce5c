"""Custom exceptions for riskbench."""

from typing import Optional, Sequence


class RiskbenchError(Exception):
    """Base exception for riskbench errors."""
    pass


class ValidationError(RiskbenchError):
    """Input or configuration failed validation."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class ConfigError(ValidationError):
    """Run configuration is missing or malformed."""
    pass


class CohortFormatError(ValidationError):
    """Episode CSV does not conform to the cohort contract."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[str] = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message, field=column)
        self.line = line
        self.column = column


class DuplicateEpisodeError(CohortFormatError):
    """The same episode_id appears twice in a cohort file."""
    pass


class SingleClassError(ValidationError):
    """An operation needs both outcome classes but got one."""
    pass


class DegenerateSplitError(RiskbenchError):
    """A holdout partition lost one of the outcome classes."""
    pass


class ColumnMismatchError(ValidationError):
    """Prediction matrix columns differ from the training columns."""

    def __init__(self, message: str, missing: Sequence[str] = (), extra: Sequence[str] = ()):
        super().__init__(message, field="columns")
        self.missing = list(missing)
        self.extra = list(extra)


class ModelFormatError(RiskbenchError):
    """Model file cannot be decoded."""

    def __init__(self, message: str, original_error: Optional[Exception] = None):
        super().__init__(message)
        self.original_error = original_error


class DegenerateVarianceError(RiskbenchError):
    """DeLong variance of the AUC difference is (numerically) zero."""
    pass


class GraceTableError(ValidationError):
    """GRACE point table violates its schema or monotonicity rules."""

    def __init__(self, message: str, original_error: Optional[Exception] = None):
        super().__init__(message, field="grace_table")
        self.original_error = original_error


class MissingMarkerError(ValidationError):
    """A GRACE marker value is absent."""

    def __init__(self, marker: str):
        super().__init__(f"GRACE marker '{marker}' is missing (GRACE has no imputation)", field=marker)
        self.marker = marker


class MarkerRangeError(ValidationError):
    """A GRACE marker value falls outside every band of the point table."""

    def __init__(self, marker: str, value: float):
        super().__init__(f"GRACE marker '{marker}' value {value!r} is outside all bands", field=marker)
        self.marker = marker
        self.value = value


class MissingArtifactError(ValidationError):
    """A pipeline stage needs an artifact an earlier stage has not produced."""

    def __init__(self, artifact: str, stage: Optional[str] = None):
        hint = f" (run `riskbench {stage}` first)" if stage else ""
        super().__init__(f"Missing pipeline artifact: {artifact}{hint}", field=artifact)
        self.artifact = artifact
        self.stage = stage
