"""
Dataset Models - observations for the conditional moment problem

Arrays are copied and made read-only on construction, so a Dataset can be
shared across worker threads.
"""
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..schemas.functional import LinearFunctionalSpec


def _readonly(arr, ndim: int) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    if ndim == 2 and out.ndim == 1:
        out = out.reshape(-1, 1)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    n observations of S, T, g1(W), g2(W) and auxiliary W-columns.

    Shapes are not enforced here; validate_dataset reports every violation.
    """
    s: np.ndarray
    t: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    aux: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "s", _readonly(self.s, 2))
        object.__setattr__(self, "t", _readonly(self.t, 2))
        object.__setattr__(self, "g1", _readonly(self.g1, 1))
        object.__setattr__(self, "g2", _readonly(self.g2, 1))
        object.__setattr__(self, "aux", {k: _readonly(v, 1) for k, v in dict(self.aux).items()})

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @property
    def d_s(self) -> int:
        return self.s.shape[1]

    @property
    def d_t(self) -> int:
        return self.t.shape[1]

    def subset(self, rows: Sequence[int]) -> "Dataset":
        idx = np.asarray(rows, dtype=int)
        return Dataset(
            s=self.s[idx],
            t=self.t[idx],
            g1=self.g1[idx],
            g2=self.g2[idx],
            aux={k: v[idx] for k, v in self.aux.items()},
        )


@dataclass(frozen=True, eq=False)
class MomentProblem:
    """A dataset together with the target functional m."""
    dataset: Dataset
    functional: LinearFunctionalSpec

    def __post_init__(self):
        # imported here: the service module imports this one
        from ..services.problem_service import validate_dataset

        violations = validate_dataset(self.dataset)
        if violations:
            details = "; ".join(v.message for v in violations)
            raise ValueError(f"Invalid dataset: {details}")

    @property
    def n(self) -> int:
        return self.dataset.n

    def subset(self, rows: Sequence[int]) -> "MomentProblem":
        return MomentProblem(dataset=self.dataset.subset(rows), functional=self.functional)

    def with_functional(self, functional: LinearFunctionalSpec) -> "MomentProblem":
        return MomentProblem(dataset=self.dataset, functional=functional)


@dataclass(frozen=True, eq=False)
class PLDataset:
    """Partially linear IV data: endogenous x_a, nonparametric block x_b, instruments z, outcome y."""
    x_a: np.ndarray
    x_b: np.ndarray
    z: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_a", _readonly(self.x_a, 2))
        object.__setattr__(self, "x_b", _readonly(self.x_b, 2))
        object.__setattr__(self, "z", _readonly(self.z, 2))
        object.__setattr__(self, "y", _readonly(self.y, 1))
        rows = {self.x_a.shape[0], self.x_b.shape[0], self.z.shape[0], self.y.shape[0]}
        if len(rows) != 1:
            raise ValueError(f"PLDataset blocks have inconsistent row counts: {sorted(rows)}")
        for name in ("x_a", "x_b", "z", "y"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"PLDataset block '{name}' has non-finite entries")
        if self.x_a.shape[1] < 1:
            raise ValueError("PLDataset needs at least one linear coordinate (d_a >= 1)")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d_a(self) -> int:
        return self.x_a.shape[1]

    @property
    def x(self) -> np.ndarray:
        """[x_a | x_b]."""
        return np.hstack([self.x_a, self.x_b])

    def subset(self, rows: Sequence[int]) -> "PLDataset":
        idx = np.asarray(rows, dtype=int)
        return PLDataset(x_a=self.x_a[idx], x_b=self.x_b[idx], z=self.z[idx], y=self.y[idx])


