"""
Symmetric linear solves used by every minimax solver.

Gram and normal-equation matrices are routinely numerically singular, so each
solve adds jitter_scale * (trace(A) / dim) to the diagonal first.
"""
import logging

import numpy as np
import scipy.linalg

from .config import settings
from .exceptions import SingularSystemError

logger = logging.getLogger(__name__)


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return (A + A^T) / 2."""
    return 0.5 * (a + a.T)


def jitter_amount(a: np.ndarray, jitter_scale: float | None = None) -> float:
    """Diagonal shift used for a symmetric matrix A."""
    scale = settings.JITTER_SCALE if jitter_scale is None else jitter_scale
    dim = a.shape[0]
    if dim == 0:
        return 0.0
    trace = float(np.trace(a))
    if trace <= 0.0:
        trace = float(dim)
    return scale * trace / dim


def add_jitter(a: np.ndarray, jitter_scale: float | None = None) -> np.ndarray:
    """Symmetrize A and add the jitter shift to its diagonal."""
    out = symmetrize(np.asarray(a, dtype=float))
    out[np.diag_indices_from(out)] += jitter_amount(out, jitter_scale)
    return out


def factor_psd(a: np.ndarray, jitter_scale: float | None = None):
    """
    Cholesky-factor a jittered PSD matrix.

    Returns a scipy cho_factor tuple usable with cho_solve.
    """
    jittered = add_jitter(a, jitter_scale)
    try:
        return scipy.linalg.cho_factor(jittered, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise SingularSystemError(f"Cholesky failed on {a.shape[0]}x{a.shape[0]} system: {e}") from e


def solve_psd(a: np.ndarray, b: np.ndarray, jitter_scale: float | None = None) -> np.ndarray:
    """
    Solve (A + jitter) x = b for symmetric PSD A.

    Falls back to a symmetric LU solve when Cholesky breaks down numerically.
    """
    jittered = add_jitter(a, jitter_scale)
    logger.debug(f"solve_psd: dim={jittered.shape[0]}, jitter={jitter_amount(symmetrize(a), jitter_scale):.3e}")
    try:
        factor = scipy.linalg.cho_factor(jittered, lower=True, check_finite=True)
        x = scipy.linalg.cho_solve(factor, b)
    except np.linalg.LinAlgError:
        try:
            x = scipy.linalg.solve(jittered, b, assume_a="sym")
        except (np.linalg.LinAlgError, ValueError) as e:
            raise SingularSystemError(f"System of size {jittered.shape[0]} is singular after jitter") from e
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(f"Non-finite solution for system of size {jittered.shape[0]}")
    return x


def solve_bordered(
    a: np.ndarray,
    rhs: np.ndarray,
    constraint: np.ndarray,
    target: float,
    jitter_scale: float | None = None,
) -> tuple[np.ndarray, float]:
    """
    Minimize the quadratic with first-order condition A c = rhs subject to
    constraint . c = target, using one Lagrange multiplier.

    The multiplier is eliminated through w = A^{-1} constraint, so
    c = A^{-1} rhs + w * (target - constraint . A^{-1} rhs) / (constraint . w).
    One refinement step along w removes rounding in the constraint.

    Returns (c, multiplier).
    """
    factor = factor_psd(a, jitter_scale)
    unconstrained = scipy.linalg.cho_solve(factor, rhs)
    w = scipy.linalg.cho_solve(factor, constraint)
    denom = float(constraint @ w)
    if not np.isfinite(denom) or abs(denom) <= 1e-300:
        raise SingularSystemError("Constraint direction is degenerate for this class")
    multiplier = (target - float(constraint @ unconstrained)) / denom
    c = unconstrained + multiplier * w
    correction = (target - float(constraint @ c)) / denom
    c = c + correction * w
    if not np.all(np.isfinite(c)):
        raise SingularSystemError(f"Non-finite solution for bordered system of size {a.shape[0] + 1}")
    return c, multiplier + correction
