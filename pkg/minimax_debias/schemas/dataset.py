"""
Dataset Schemas - validation reports and CSV column-role sidecars
"""
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

from .functional import AverageFiniteDifference, LinearFunctionalSpec


class Violation(BaseModel):
    """One failed Dataset invariant."""
    field: str
    kind: Literal["length mismatch", "non-finite entry", "too few observations", "empty block", "bad shape"]
    message: str


class DatasetRoles(BaseModel):
    """
    Sidecar for a moment-problem CSV.

    g1 may be omitted, meaning g1 = 1 (the NPIV case).
    """
    s: List[str] = Field(min_length=1)
    t: List[str] = Field(min_length=1)
    g1: Optional[str] = None
    g2: str
    aux: List[str] = Field(default_factory=list)
    functional: LinearFunctionalSpec = Field(default_factory=AverageFiniteDifference)


class PLRoles(BaseModel):
    """Sidecar for a partially linear CSV (a, b, z, y roles)."""
    a: List[str] = Field(min_length=1)
    b: List[str] = Field(min_length=1)
    z: List[str] = Field(min_length=1)
    y: str

    @model_validator(mode="after")
    def _disjoint_linear_block(self):
        if set(self.a) & set(self.b):
            raise ValueError("Columns cannot be both linear (a) and nonparametric (b)")
        return self
