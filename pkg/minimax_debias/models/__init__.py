"""Models Package - immutable numeric containers."""

from .dataset import Dataset, MomentProblem, PLDataset
from .function import (
    FittedFunction, FeatureFunction, KernelExpansion, PartiallyLinearFunction, SumFunction,
    combine, zero_like,
)
from .discrete import DiscreteProblem, XiSolution, ThetaStarResult
from .artifacts import FoldArtifacts

__all__ = [
    "Dataset", "MomentProblem", "PLDataset",
    "FittedFunction", "FeatureFunction", "KernelExpansion", "PartiallyLinearFunction", "SumFunction",
    "combine", "zero_like",
    "DiscreteProblem", "XiSolution", "ThetaStarResult",
    "FoldArtifacts",
]
