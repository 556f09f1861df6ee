"""Weekly discrete-time dropout hazard modeling on OULAD-schema tables.

The package turns raw enrollment tables into a person-period panel, fits a
class-balanced L2-penalized logistic hazard model with grouped out-of-fold
Platt calibration, reweights evaluation by inverse censoring probabilities,
simulates counterfactual engagement policies, and reports subgroup gaps with
bootstrap intervals. Every stage is deterministic for a fixed master seed.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    CalibrationError,
    ConfigError,
    ContractViolation,
    DegenerateSupportError,
    EmptyInputError,
    PipelineStageError,
    SchemaError,
    TrainingError,
    UndefinedMetricError,
)

__all__ = [
    "CalibrationError",
    "ConfigError",
    "ContractViolation",
    "DegenerateSupportError",
    "EmptyInputError",
    "PipelineStageError",
    "SchemaError",
    "TrainingError",
    "UndefinedMetricError",
    "__version__",
]
