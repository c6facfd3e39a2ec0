"""
Linear Functional Schemas - the target functional m(W; h)

Each kind evaluates m(W_i; f) per observation for any function handle f on
S-space. f maps an (r x d_s) input matrix to r values, or to an (r x k) matrix
when it stacks k basis functions; the result has the same trailing shape.
"""
from typing import TYPE_CHECKING, Annotated, Callable, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

if TYPE_CHECKING:
    from ..models.dataset import Dataset

FunctionHandle = Callable[[np.ndarray], np.ndarray]


def row_index(d: "Dataset", rows: Optional[Sequence[int]]) -> np.ndarray:
    return np.arange(d.n) if rows is None else np.asarray(rows, dtype=int)


class MeanFunctional(BaseModel):
    """m(W; h) = h(S)."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["mean"] = "mean"

    def evaluate(self, f: FunctionHandle, d: "Dataset", rows: Optional[Sequence[int]] = None) -> np.ndarray:
        return np.asarray(f(d.s[row_index(d, rows)]), dtype=float)


class AverageFiniteDifference(BaseModel):
    """m(W; h) = (h(S + eps e_j) - h(S - eps e_j)) / (2 eps), an average-derivative proxy."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["average_finite_difference"] = "average_finite_difference"
    eps: float = Field(default=0.1, gt=0)
    coordinate: int = Field(default=0, ge=0)

    def evaluate(self, f: FunctionHandle, d: "Dataset", rows: Optional[Sequence[int]] = None) -> np.ndarray:
        s = d.s[row_index(d, rows)]
        if self.coordinate >= s.shape[1]:
            raise ValueError(f"Coordinate {self.coordinate} out of range for {s.shape[1]} S columns")
        shift = np.zeros(s.shape[1])
        shift[self.coordinate] = self.eps
        up = np.asarray(f(s + shift), dtype=float)
        down = np.asarray(f(s - shift), dtype=float)
        return (up - down) / (2.0 * self.eps)


class CoordinateSelector(BaseModel):
    """
    m(W; h) = h(S + e_index) - h(S).

    For h = theta^T x_a + g(x_b) with x_a leading, this is theta_index exactly.
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["coordinate_selector"] = "coordinate_selector"
    index: int = Field(default=0, ge=0)

    def evaluate(self, f: FunctionHandle, d: "Dataset", rows: Optional[Sequence[int]] = None) -> np.ndarray:
        s = d.s[row_index(d, rows)]
        if self.index >= s.shape[1]:
            raise ValueError(f"Coordinate {self.index} out of range for {s.shape[1]} S columns")
        shift = np.zeros(s.shape[1])
        shift[self.index] = 1.0
        return np.asarray(f(s + shift), dtype=float) - np.asarray(f(s), dtype=float)


class AuxWeighted(BaseModel):
    """m(W; h) = aux[column] * h(S); with the Riesz representer as the column, E[m] is the functional."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["aux_weighted"] = "aux_weighted"
    column: str = "alpha"

    def evaluate(self, f: FunctionHandle, d: "Dataset", rows: Optional[Sequence[int]] = None) -> np.ndarray:
        if self.column not in d.aux:
            raise ValueError(f"Dataset has no aux column '{self.column}'")
        idx = row_index(d, rows)
        values = np.asarray(f(d.s[idx]), dtype=float)
        weights = d.aux[self.column][idx]
        return weights * values if values.ndim == 1 else weights[:, None] * values


LinearFunctionalSpec = Annotated[
    Union[MeanFunctional, AverageFiniteDifference, CoordinateSelector, AuxWeighted],
    Field(discriminator="kind"),
]
