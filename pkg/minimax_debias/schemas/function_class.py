"""
Function Class Schemas - hypothesis and test classes for the minimax solvers
"""
from typing import Annotated, Any, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

MAX_SIEVE_DEGREE = 10


class LinearSieve(BaseModel):
    """Polynomial feature map: intercept, coordinates, per-coordinate powers."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["sieve"] = "sieve"
    degree: int = Field(default=1, ge=0, le=MAX_SIEVE_DEGREE)
    intercept: bool = True
    cross_terms: bool = False


class GaussianRKHS(BaseModel):
    """Gaussian kernel class; bandwidth None means the median heuristic."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["rkhs"] = "rkhs"
    bandwidth: Optional[float] = Field(default=None, gt=0)


BaseClassSpec = Annotated[Union[LinearSieve, GaussianRKHS], Field(discriminator="kind")]


class PartiallyLinear(BaseModel):
    """theta^T x_a + g(x_b), inputs laid out as [x_a | x_b]."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["partially_linear"] = "partially_linear"
    d_a: int = Field(ge=1)
    g_class: BaseClassSpec = Field(default_factory=LinearSieve)
    theta_ridge: float = Field(default=1e-8, ge=0)


FunctionClassSpec = Annotated[
    Union[LinearSieve, GaussianRKHS, PartiallyLinear], Field(discriminator="kind")
]


class FittedFunctionRecord(BaseModel):
    """JSON form of a fitted function (per-fold nuisance persistence)."""
    kind: Literal["features", "kernel", "partially_linear", "sum"]
    spec: Optional[dict[str, Any]] = None
    input_dim: int
    coefficients: Optional[List[float]] = None
    anchors: Optional[List[List[float]]] = None
    theta: Optional[List[float]] = None
    g: Optional["FittedFunctionRecord"] = None
    terms: Optional[List["FittedFunctionRecord"]] = None
    weights: Optional[List[float]] = None


FittedFunctionRecord.model_rebuild()
