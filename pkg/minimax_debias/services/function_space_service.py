"""
Function Space Service - designs, norms and persistence for the function classes

A Basis fixes a class on training inputs: RKHS classes take the training rows
as anchors, sieves take their feature map, partially linear classes stack the
linear block in front of the nonparametric one.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg

from ..core.exceptions import DimensionMismatchError
from ..core.kernels import as_matrix, features, gram, median_bandwidth, n_features, resolve_rkhs
from ..models.function import (
    FeatureFunction,
    FittedFunction,
    KernelExpansion,
    PartiallyLinearFunction,
    SumFunction,
)
from ..schemas.function_class import (
    FittedFunctionRecord,
    GaussianRKHS,
    LinearSieve,
    PartiallyLinear,
)

logger = logging.getLogger(__name__)

__all__ = [
    "features",
    "gram",
    "median_bandwidth",
    "evaluate",
    "class_norm_sq",
    "Basis",
    "build_basis",
    "dump_function",
    "load_function",
    "save_function",
    "read_function",
]


def evaluate(f: FittedFunction, x: np.ndarray) -> np.ndarray:
    """f at every row of x."""
    return f.evaluate(x)


def class_norm_sq(f: FittedFunction) -> float:
    """Squared class norm of f."""
    return f.class_norm_sq()


# =============================================================================
# BASIS
# =============================================================================

@dataclass(frozen=True, eq=False)
class Basis:
    """
    A function class fixed on training inputs.

    design(x) has one column per coefficient; norm_matrix N gives
    ||f||^2 = c^T N c; function(c) packages coefficients as a FittedFunction.
    """
    spec: object
    input_dim: int
    design: Callable[[np.ndarray], np.ndarray]
    norm_matrix: np.ndarray
    function: Callable[[np.ndarray], FittedFunction]
    theta_ridge: float = 0.0
    d_linear: int = 0

    @property
    def size(self) -> int:
        return self.norm_matrix.shape[0]

    @property
    def is_kernel(self) -> bool:
        return isinstance(self.spec, GaussianRKHS)

    def penalty_matrix(self, gamma: float) -> np.ndarray:
        """gamma * N, with the unpenalized linear block held at theta_ridge."""
        out = gamma * self.norm_matrix
        if self.d_linear:
            idx = np.arange(self.d_linear)
            out[idx, idx] = self.theta_ridge
        return out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.design(x)


def _check_dim(x: np.ndarray, input_dim: int, label: str) -> np.ndarray:
    x = as_matrix(x)
    if x.shape[1] != input_dim:
        raise DimensionMismatchError(f"{label} expects {input_dim} input columns, got {x.shape[1]}")
    return x


def _sieve_basis(spec: LinearSieve, x_train: np.ndarray) -> Basis:
    input_dim = x_train.shape[1]
    p = n_features(spec, input_dim)

    def design(x):
        return features(spec, _check_dim(x, input_dim, "Sieve basis"))

    def function(c):
        return FeatureFunction(weights=c, spec=spec, input_dim=input_dim)

    return Basis(spec=spec, input_dim=input_dim, design=design, norm_matrix=np.eye(p), function=function)


def _kernel_basis(spec: GaussianRKHS, x_train: np.ndarray) -> Basis:
    resolved = resolve_rkhs(spec, x_train)
    anchors = np.array(x_train, dtype=float, copy=True)
    anchors.setflags(write=False)
    input_dim = anchors.shape[1]
    norm_matrix = gram(resolved, anchors)

    def design(x):
        return gram(resolved, _check_dim(x, input_dim, "Kernel basis"), anchors)

    def function(c):
        return KernelExpansion(anchors=anchors, coefficients=c, spec=resolved)

    return Basis(spec=resolved, input_dim=input_dim, design=design, norm_matrix=norm_matrix, function=function)


def _partially_linear_basis(spec: PartiallyLinear, x_train: np.ndarray) -> Basis:
    if x_train.shape[1] <= spec.d_a:
        raise DimensionMismatchError(
            f"Partially linear class with d_a={spec.d_a} needs more than {spec.d_a} input columns"
        )
    d_a = spec.d_a
    g_basis = build_basis(spec.g_class, x_train[:, d_a:])
    input_dim = x_train.shape[1]
    norm_matrix = scipy.linalg.block_diag(np.zeros((d_a, d_a)), g_basis.norm_matrix)

    def design(x):
        x = _check_dim(x, input_dim, "Partially linear basis")
        return np.hstack([x[:, :d_a], g_basis.design(x[:, d_a:])])

    def function(c):
        c = np.ravel(c)
        return PartiallyLinearFunction(theta=c[:d_a], g=g_basis.function(c[d_a:]))

    return Basis(
        spec=spec.model_copy(update={"g_class": g_basis.spec}),
        input_dim=input_dim,
        design=design,
        norm_matrix=norm_matrix,
        function=function,
        theta_ridge=spec.theta_ridge,
        d_linear=d_a,
    )


def build_basis(spec, x_train: np.ndarray) -> Basis:
    """Fix a function class on the rows it will be trained on."""
    x_train = as_matrix(x_train)
    if isinstance(spec, LinearSieve):
        basis = _sieve_basis(spec, x_train)
    elif isinstance(spec, GaussianRKHS):
        basis = _kernel_basis(spec, x_train)
    elif isinstance(spec, PartiallyLinear):
        basis = _partially_linear_basis(spec, x_train)
    else:
        raise ValueError(f"Unknown function class: {spec!r}")
    logger.debug(f"Built {spec.kind} basis with {basis.size} coefficients on {x_train.shape[0]} rows")
    return basis


# =============================================================================
# PERSISTENCE
# =============================================================================

def dump_function(f: FittedFunction) -> FittedFunctionRecord:
    """JSON-ready record of a fitted function."""
    if isinstance(f, FeatureFunction):
        return FittedFunctionRecord(
            kind="features",
            spec=f.spec.model_dump(),
            input_dim=f.input_dim,
            coefficients=f.weights.tolist(),
        )
    if isinstance(f, KernelExpansion):
        return FittedFunctionRecord(
            kind="kernel",
            spec=f.spec.model_dump(),
            input_dim=f.input_dim,
            coefficients=f.coefficients.tolist(),
            anchors=f.anchors.tolist(),
        )
    if isinstance(f, PartiallyLinearFunction):
        return FittedFunctionRecord(
            kind="partially_linear",
            input_dim=f.input_dim,
            theta=f.theta.tolist(),
            g=dump_function(f.g),
        )
    if isinstance(f, SumFunction):
        return FittedFunctionRecord(
            kind="sum",
            input_dim=f.input_dim,
            terms=[dump_function(t) for t in f.terms],
            weights=f.weights.tolist(),
        )
    raise ValueError(f"Cannot serialize {type(f).__name__}")


def load_function(record: FittedFunctionRecord) -> FittedFunction:
    """Rebuild a fitted function from its record."""
    if record.kind == "features":
        return FeatureFunction(
            weights=np.asarray(record.coefficients, dtype=float),
            spec=LinearSieve.model_validate(record.spec),
            input_dim=record.input_dim,
        )
    if record.kind == "kernel":
        anchors = np.asarray(record.anchors, dtype=float).reshape(-1, record.input_dim)
        return KernelExpansion(
            anchors=anchors,
            coefficients=np.asarray(record.coefficients, dtype=float),
            spec=GaussianRKHS.model_validate(record.spec),
        )
    if record.kind == "partially_linear":
        return PartiallyLinearFunction(theta=np.asarray(record.theta, dtype=float), g=load_function(record.g))
    return SumFunction(
        terms=tuple(load_function(t) for t in record.terms),
        weights=np.asarray(record.weights, dtype=float),
    )


def save_function(f: FittedFunction, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_function(f).model_dump_json(indent=2), encoding="utf-8")
    return path


def read_function(path: str | Path) -> FittedFunction:
    record = FittedFunctionRecord.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
    return load_function(record)
