"""Error taxonomy shared across the pipeline.

Input-shape problems raise ValueError subclasses, numerical or state problems
raise RuntimeError subclasses. Stage orchestration wraps either kind in
PipelineStageError so callers see which stage failed and why.
"""

from __future__ import annotations


class SchemaError(ValueError):
    """A required column is missing or a column has an invalid type or value."""


class EmptyInputError(ValueError):
    """An input table or array that must be non-empty is empty."""


class ConfigError(ValueError):
    """A run configuration has unknown keys or values outside their domain."""


class TrainingError(RuntimeError):
    """Model fitting cannot proceed or did not converge."""


class CalibrationError(RuntimeError):
    """No usable out-of-fold scores were produced for the calibrator."""


class DegenerateSupportError(RuntimeError):
    """Censoring support is too thin to define the requested horizon."""


class UndefinedMetricError(RuntimeError):
    """A metric is undefined on the given inputs (single class, no pairs)."""


class ContractViolation(RuntimeError):
    """An internal invariant that callers rely on was broken."""


class PipelineStageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and a machine code."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        self.code = f"{stage}:{type(cause).__name__}"
        super().__init__(f"[{self.code}] stage '{stage}' failed: {cause}")
