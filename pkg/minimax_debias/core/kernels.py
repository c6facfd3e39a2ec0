"""
Feature maps and Gaussian Gram matrices behind the function classes.
"""
import logging

import numpy as np
from scipy.spatial.distance import pdist
from sklearn.metrics.pairwise import rbf_kernel
from sklearn.preprocessing import PolynomialFeatures

from ..schemas.function_class import MAX_SIEVE_DEGREE, GaussianRKHS, LinearSieve
from .config import settings
from .exceptions import DimensionMismatchError

logger = logging.getLogger(__name__)


def as_matrix(x: np.ndarray) -> np.ndarray:
    """View a vector as an n x 1 matrix; matrices pass through."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"Expected a vector or matrix, got shape {arr.shape}")
    return arr


def features(spec: LinearSieve, x: np.ndarray) -> np.ndarray:
    """
    Evaluate the sieve basis at each row of x.

    Columns: intercept (if flagged), every coordinate, then per-coordinate powers
    2..degree. With cross_terms the full monomial basis of PolynomialFeatures is
    used instead.
    """
    if spec.degree > MAX_SIEVE_DEGREE:
        raise ValueError(f"Sieve degree {spec.degree} exceeds {MAX_SIEVE_DEGREE}")
    x = as_matrix(x)
    n = x.shape[0]

    if spec.cross_terms and spec.degree >= 2:
        poly = PolynomialFeatures(degree=spec.degree, include_bias=spec.intercept)
        return poly.fit_transform(x)

    blocks = []
    if spec.intercept:
        blocks.append(np.ones((n, 1)))
    for power in range(1, spec.degree + 1):
        blocks.append(x**power)
    if not blocks:
        raise ValueError("Sieve with degree 0 and no intercept has no basis functions")
    return np.hstack(blocks)


def n_features(spec: LinearSieve, input_dim: int) -> int:
    """Number of sieve columns for inputs of the given dimension."""
    return features(spec, np.zeros((1, input_dim))).shape[1]


def median_bandwidth(x: np.ndarray) -> float:
    """
    Median pairwise Euclidean distance over i < j.

    Above MEDIAN_SUBSAMPLE rows a fixed-seed subsample is used. Returns 1.0 when
    the median is 0.
    """
    x = as_matrix(x)
    n = x.shape[0]
    if n < 2:
        raise ValueError(f"Median heuristic needs at least 2 rows, got {n}")
    limit = settings.MEDIAN_SUBSAMPLE
    if n > limit:
        rng = np.random.default_rng(settings.MEDIAN_SEED)
        x = x[rng.choice(n, size=limit, replace=False)]
    median = float(np.median(pdist(x)))
    if median <= 0.0 or not np.isfinite(median):
        return 1.0
    return median


def resolve_rkhs(spec: GaussianRKHS, x: np.ndarray) -> GaussianRKHS:
    """Fix the bandwidth of a kernel class on training inputs."""
    if spec.bandwidth is not None:
        return spec
    bandwidth = median_bandwidth(x)
    logger.debug(f"Median-heuristic bandwidth {bandwidth:.4f} on {as_matrix(x).shape[0]} rows")
    return spec.model_copy(update={"bandwidth": bandwidth})


def gram(spec: GaussianRKHS, x: np.ndarray, x_other: np.ndarray | None = None) -> np.ndarray:
    """
    Gaussian Gram matrix exp(-||x_i - x'_j||^2 / (2 bandwidth^2)).

    An unresolved bandwidth is resolved on x.
    """
    x = as_matrix(x)
    x_other = x if x_other is None else as_matrix(x_other)
    if x.shape[1] != x_other.shape[1]:
        raise DimensionMismatchError(f"Gram inputs have {x.shape[1]} and {x_other.shape[1]} columns")
    spec = resolve_rkhs(spec, x)
    return rbf_kernel(x, x_other, gamma=1.0 / (2.0 * spec.bandwidth**2))
