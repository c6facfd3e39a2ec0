"""Schemas Package - pydantic models for configs, sidecars and results."""

from .function_class import (
    LinearSieve, GaussianRKHS, PartiallyLinear, FunctionClassSpec, FittedFunctionRecord,
)
from .functional import (
    MeanFunctional, AverageFiniteDifference, CoordinateSelector, AuxWeighted, LinearFunctionalSpec,
)
from .dataset import Violation, DatasetRoles, PLRoles
from .estimation import (
    PenaltyConfig, CrossfitConfig, ThetaEstimate, PLEstimate, QMomentDiagnostics, METHODS,
)
from .experiment import (
    DgpConfig, OracleNuisances, OracleTheta, ExperimentGrid, ExperimentConfig, Cell,
    ReplicationRecord, MetricsRow, CheckResult,
)

__all__ = [
    # Function classes
    "LinearSieve", "GaussianRKHS", "PartiallyLinear", "FunctionClassSpec", "FittedFunctionRecord",
    # Functionals
    "MeanFunctional", "AverageFiniteDifference", "CoordinateSelector", "AuxWeighted", "LinearFunctionalSpec",
    # Data
    "Violation", "DatasetRoles", "PLRoles",
    # Estimation
    "PenaltyConfig", "CrossfitConfig", "ThetaEstimate", "PLEstimate", "QMomentDiagnostics", "METHODS",
    # Experiments
    "DgpConfig", "OracleNuisances", "OracleTheta", "ExperimentGrid", "ExperimentConfig", "Cell",
    "ReplicationRecord", "MetricsRow", "CheckResult",
]
