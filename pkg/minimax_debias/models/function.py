"""
FittedFunction Models - functions of S or T returned by the solvers

Each variant is immutable, evaluable on a matrix of inputs, and carries its
class norm.
"""
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from ..core.exceptions import DimensionMismatchError
from ..core.kernels import as_matrix, features, gram
from ..schemas.function_class import GaussianRKHS, LinearSieve


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


class FittedFunction:
    """Base class: a real-valued function on R^input_dim."""

    input_dim: int

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def class_norm_sq(self) -> float:
        raise NotImplementedError

    def scaled(self, c: float) -> "FittedFunction":
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = as_matrix(x)
        if x.shape[1] != self.input_dim:
            raise DimensionMismatchError(
                f"{type(self).__name__} expects {self.input_dim} input columns, got {x.shape[1]}"
            )
        return x


@dataclass(frozen=True, eq=False)
class FeatureFunction(FittedFunction):
    """theta^T features(x) for a linear sieve."""
    weights: np.ndarray
    spec: LinearSieve
    input_dim: int

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(np.ravel(self.weights)))

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        phi = features(self.spec, self._check_input(x))
        if phi.shape[1] != self.weights.shape[0]:
            raise DimensionMismatchError(
                f"Sieve has {phi.shape[1]} features but {self.weights.shape[0]} weights"
            )
        return phi @ self.weights

    def class_norm_sq(self) -> float:
        return float(self.weights @ self.weights)

    def scaled(self, c: float) -> "FeatureFunction":
        return FeatureFunction(weights=c * self.weights, spec=self.spec, input_dim=self.input_dim)


@dataclass(frozen=True, eq=False)
class KernelExpansion(FittedFunction):
    """sum_j alpha_j k(x, anchor_j) for a Gaussian kernel with resolved bandwidth."""
    anchors: np.ndarray
    coefficients: np.ndarray
    spec: GaussianRKHS

    def __post_init__(self):
        if self.spec.bandwidth is None:
            raise ValueError("KernelExpansion requires a resolved bandwidth")
        anchors = _frozen(as_matrix(self.anchors))
        coefficients = _frozen(np.ravel(self.coefficients))
        if anchors.shape[0] != coefficients.shape[0]:
            raise DimensionMismatchError(
                f"{anchors.shape[0]} anchors but {coefficients.shape[0]} coefficients"
            )
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "coefficients", coefficients)

    @property
    def input_dim(self) -> int:
        return self.anchors.shape[1]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return gram(self.spec, self._check_input(x), self.anchors) @ self.coefficients

    def class_norm_sq(self) -> float:
        k = gram(self.spec, self.anchors)
        return max(float(self.coefficients @ k @ self.coefficients), 0.0)

    def scaled(self, c: float) -> "KernelExpansion":
        return KernelExpansion(anchors=self.anchors, coefficients=c * self.coefficients, spec=self.spec)


@dataclass(frozen=True, eq=False)
class PartiallyLinearFunction(FittedFunction):
    """theta^T x_a + g(x_b) on inputs laid out as [x_a | x_b]."""
    theta: np.ndarray
    g: FittedFunction

    def __post_init__(self):
        object.__setattr__(self, "theta", _frozen(np.ravel(self.theta)))

    @property
    def d_a(self) -> int:
        return self.theta.shape[0]

    @property
    def input_dim(self) -> int:
        return self.d_a + self.g.input_dim

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        return x[:, : self.d_a] @ self.theta + self.g.evaluate(x[:, self.d_a :])

    def class_norm_sq(self) -> float:
        # theta is unpenalized; the norm lives on the nonparametric block
        return self.g.class_norm_sq()

    def scaled(self, c: float) -> "PartiallyLinearFunction":
        return PartiallyLinearFunction(theta=c * self.theta, g=self.g.scaled(c))


@dataclass(frozen=True, eq=False)
class SumFunction(FittedFunction):
    """sum_k w_k f_k for functions from different classes."""
    terms: Tuple[FittedFunction, ...]
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.terms:
            raise ValueError("SumFunction needs at least one term")
        dims = {t.input_dim for t in self.terms}
        if len(dims) != 1:
            raise DimensionMismatchError(f"Summands have different input dimensions: {sorted(dims)}")
        weights = np.ones(len(self.terms)) if self.weights is None else np.ravel(self.weights)
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "weights", _frozen(weights))

    @property
    def input_dim(self) -> int:
        return self.terms[0].input_dim

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        return sum(w * t.evaluate(x) for w, t in zip(self.weights, self.terms))

    def class_norm_sq(self) -> float:
        raise ValueError("A sum of functions from different classes has no single class norm")

    def scaled(self, c: float) -> "SumFunction":
        return SumFunction(terms=self.terms, weights=c * self.weights)


def zero_like(f: FittedFunction) -> FittedFunction:
    """The zero function in f's class."""
    return f.scaled(0.0)


def combine(f: FittedFunction, g: FittedFunction, a: float = 1.0, b: float = 1.0) -> FittedFunction:
    """
    a*f + b*g, kept inside one class when both operands share it.

    Sieves with equal specs add weights; kernel expansions with equal bandwidth
    concatenate anchors; partially linear functions combine blockwise.
    """
    if f.input_dim != g.input_dim:
        raise DimensionMismatchError(f"Cannot combine functions on {f.input_dim} and {g.input_dim} inputs")
    if isinstance(f, FeatureFunction) and isinstance(g, FeatureFunction) and f.spec == g.spec:
        return FeatureFunction(weights=a * f.weights + b * g.weights, spec=f.spec, input_dim=f.input_dim)
    if isinstance(f, KernelExpansion) and isinstance(g, KernelExpansion) and f.spec == g.spec:
        if f.anchors.shape == g.anchors.shape and np.array_equal(f.anchors, g.anchors):
            return KernelExpansion(
                anchors=f.anchors, coefficients=a * f.coefficients + b * g.coefficients, spec=f.spec
            )
        return KernelExpansion(
            anchors=np.vstack([f.anchors, g.anchors]),
            coefficients=np.concatenate([a * f.coefficients, b * g.coefficients]),
            spec=f.spec,
        )
    if (
        isinstance(f, PartiallyLinearFunction)
        and isinstance(g, PartiallyLinearFunction)
        and f.d_a == g.d_a
    ):
        return PartiallyLinearFunction(theta=a * f.theta + b * g.theta, g=combine(f.g, g.g, a, b))
    return SumFunction(terms=(f, g), weights=np.array([a, b]))
