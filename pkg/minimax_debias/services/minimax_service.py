"""
Minimax Service - closed-form saddle points of the penalized moment problems

For a test class fixed on T, the inner problem
    sup_q E_n[u q] - 1/2 E_n[q^2] - gamma_q ||q||^2
equals u^T Omega u / (2n) for a symmetric PSD operator Omega, so every outer
problem over h or xi is a linear system in the coefficients.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from sklearn.kernel_ridge import KernelRidge
from sklearn.linear_model import Ridge
from sklearn.model_selection import GridSearchCV, KFold

from ..core.exceptions import IdentificationError, SingularSystemError
from ..core.kernels import as_matrix
from ..core.linalg import factor_psd, jitter_amount, solve_bordered, solve_psd, symmetrize
from ..models.dataset import MomentProblem
from ..models.function import FittedFunction, KernelExpansion, PartiallyLinearFunction
from ..schemas.estimation import PenaltyConfig
from ..schemas.function_class import GaussianRKHS, LinearSieve
from .function_space_service import Basis, build_basis
from .problem_service import functional_basis_mean

logger = logging.getLogger(__name__)


def _resolve(pen: PenaltyConfig, n: int) -> PenaltyConfig:
    return pen if pen.resolved else pen.for_sample_size(n)


# =============================================================================
# TEST OPERATOR
# =============================================================================

@dataclass(frozen=True, eq=False)
class TestOperator:
    """
    Omega for a test class on n rows of T, kept in factored form.

    RKHS: Omega = K (K + 2n gamma_q I)^-1.
    Feature classes: Omega = Psi (Psi^T Psi + 2n gamma_q N)^-1 Psi^T.
    """
    __test__ = False

    basis: Basis
    gamma_q: float
    n: int
    design: np.ndarray
    factor: tuple

    def _solve(self, x: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self.factor, x)

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Omega u (u may be a vector or a matrix of columns)."""
        if self.basis.is_kernel:
            return self.design @ self._solve(u)
        return self.design @ self._solve(self.design.T @ u)

    def quadratic(self, x: np.ndarray) -> np.ndarray:
        """X^T Omega X, symmetrized."""
        if self.basis.is_kernel:
            return symmetrize((self.design @ x).T @ self._solve(x))
        projected = self.design.T @ x
        return symmetrize(projected.T @ self._solve(projected))

    def value(self, u: np.ndarray) -> float:
        """The inner supremum u^T Omega u / (2n)."""
        u = np.ravel(u)
        return float(u @ self.apply(u)) / (2.0 * self.n)

    def maximizer_coefficients(self, u: np.ndarray) -> np.ndarray:
        u = np.ravel(u)
        if self.basis.is_kernel:
            return self._solve(u)
        return self._solve(self.design.T @ u)

    def maximizer(self, u: np.ndarray) -> FittedFunction:
        """The optimal test function q for residual u."""
        return self.basis.function(self.maximizer_coefficients(u))

    @property
    def matrix(self) -> np.ndarray:
        """Materialized Omega; only for small n."""
        return symmetrize(self.apply(np.eye(self.n)))


def build_test_operator(
    q_class,
    t_data: np.ndarray,
    gamma_q: float,
    jitter_scale: Optional[float] = None,
) -> TestOperator:
    """Closed-form inner maximization over q_class on the rows of t_data."""
    if gamma_q < 0:
        raise ValueError(f"gamma_q must be nonnegative, got {gamma_q}")
    basis = build_basis(q_class, t_data)
    n = as_matrix(t_data).shape[0]
    if basis.is_kernel:
        design = basis.norm_matrix
        system = design + 2.0 * n * gamma_q * np.eye(n)
    else:
        design = basis.design(t_data)
        system = design.T @ design + 2.0 * n * basis.penalty_matrix(gamma_q)
    factor = factor_psd(system, jitter_scale)
    logger.debug(f"Test operator: {q_class.kind}, n={n}, system size {system.shape[0]}, gamma_q={gamma_q:.3e}")
    return TestOperator(basis=basis, gamma_q=gamma_q, n=n, design=design, factor=factor)


# =============================================================================
# PRIMARY NUISANCE h
# =============================================================================

def h_system(
    p: MomentProblem, h_class, q_class, pen: PenaltyConfig
) -> Tuple[np.ndarray, np.ndarray, Basis, TestOperator]:
    """
    The first-order system of the penalized minimax problem for h:
    [B^T D Omega D B + 2 mu B^T B + 2n gamma_h N] c = B^T D Omega g2.
    """
    d = p.dataset
    pen = _resolve(pen, d.n)
    basis = build_basis(h_class, d.s)
    op = build_test_operator(q_class, d.t, pen.gamma_q, pen.jitter_scale)
    b = basis.design(d.s)
    db = d.g1[:, None] * b
    a = op.quadratic(db) + 2.0 * pen.mu_n * (b.T @ b) + 2.0 * d.n * basis.penalty_matrix(pen.gamma_h)
    rhs = db.T @ op.apply(d.g2)
    return symmetrize(a), rhs, basis, op


def estimate_h(p: MomentProblem, h_class, q_class, pen: PenaltyConfig) -> FittedFunction:
    """Penalized minimax estimate of the primary nuisance h."""
    a, rhs, basis, _ = h_system(p, h_class, q_class, pen)
    c = solve_psd(a, rhs, pen.jitter_scale)
    logger.debug(f"estimate_h: {basis.size} coefficients, FOC residual {np.linalg.norm(a @ c - rhs):.2e}")
    return basis.function(c)


# =============================================================================
# DEBIASING NUISANCES xi AND q
# =============================================================================

def xi_system(
    p: MomentProblem, xi_class, q_class, pen: PenaltyConfig
) -> Tuple[np.ndarray, np.ndarray, Basis, TestOperator]:
    """
    The first-order system for xi: [B^T D Omega D B + 2n gamma_xi N] c = n m_bar,
    with m_bar_j = E_n[m(W; basis_j)].
    """
    d = p.dataset
    pen = _resolve(pen, d.n)
    basis = build_basis(xi_class, d.s)
    op = build_test_operator(q_class, d.t, pen.gamma_q, pen.jitter_scale)
    b = basis.design(d.s)
    db = d.g1[:, None] * b
    a = op.quadratic(db) + 2.0 * d.n * basis.penalty_matrix(pen.gamma_xi)
    m_bar = functional_basis_mean(p.functional, basis.design, d)
    if m_bar.shape[0] != basis.size:
        raise SingularSystemError(f"Functional produced {m_bar.shape[0]} basis values for {basis.size} coefficients")
    return symmetrize(a), d.n * m_bar, basis, op


def estimate_xi(p: MomentProblem, xi_class, q_class, pen: PenaltyConfig) -> FittedFunction:
    """Penalized minimax estimate of the debiasing direction xi."""
    a, rhs, basis, _ = xi_system(p, xi_class, q_class, pen)
    c = solve_psd(a, rhs, pen.jitter_scale)
    return basis.function(c)


def _cv_ridge(estimator, x: np.ndarray, v: np.ndarray, n: int, pen: PenaltyConfig, jitter: float):
    grid = sorted(pen.tilde_gamma_grid)
    search = GridSearchCV(
        estimator,
        param_grid={"alpha": [n * g + jitter for g in grid]},
        cv=KFold(n_splits=pen.cv_folds, shuffle=True, random_state=0),
        scoring="neg_mean_squared_error",
    )
    search.fit(x, v)
    chosen = (search.best_params_["alpha"] - jitter) / n
    logger.info(f"Cross-validated tilde_gamma_q = {chosen:.3e} over {len(grid)} candidates")
    return search.best_estimator_


def project_q(
    p: MomentProblem,
    xi_hat: FittedFunction,
    q_class,
    tilde_gamma_q: Optional[float] = None,
    pen: Optional[PenaltyConfig] = None,
) -> FittedFunction:
    """
    Ridge projection of v = g1 * xi_hat(S) onto functions of T.

    With pen.tilde_gamma_grid set, tilde_gamma_q is chosen by K-fold CV instead.
    """
    d = p.dataset
    pen = _resolve(pen or PenaltyConfig(), d.n)
    tilde_gamma_q = pen.tilde_gamma_q if tilde_gamma_q is None else tilde_gamma_q
    if tilde_gamma_q < 0:
        raise ValueError(f"tilde_gamma_q must be nonnegative, got {tilde_gamma_q}")
    v = d.g1 * xi_hat.evaluate(d.s)
    n = d.n
    basis = build_basis(q_class, d.t)

    if isinstance(basis.spec, GaussianRKHS):
        # unit diagonal: the jitter shift is jitter_scale itself
        jitter = pen.jitter_scale
        model = KernelRidge(alpha=n * tilde_gamma_q + jitter, kernel="rbf", gamma=1.0 / (2.0 * basis.spec.bandwidth**2))
        if pen.tilde_gamma_grid:
            model = _cv_ridge(model, d.t, v, n, pen, jitter)
        else:
            model.fit(d.t, v)
        return KernelExpansion(anchors=d.t, coefficients=np.ravel(model.dual_coef_), spec=basis.spec)

    psi = basis.design(d.t)
    if isinstance(basis.spec, LinearSieve):
        jitter = jitter_amount(psi.T @ psi, pen.jitter_scale)
        model = Ridge(alpha=n * tilde_gamma_q + jitter, fit_intercept=False)
        if pen.tilde_gamma_grid:
            model = _cv_ridge(model, psi, v, n, pen, jitter)
        else:
            model.fit(psi, v)
        return basis.function(np.ravel(model.coef_))

    system = psi.T @ psi + n * basis.penalty_matrix(tilde_gamma_q)
    return basis.function(solve_psd(system, psi.T @ v, pen.jitter_scale))


# =============================================================================
# CLEVER INSTRUMENT
# =============================================================================

def estimate_h_clever(
    p: MomentProblem,
    h_class,
    q_class,
    pen: PenaltyConfig,
    q_dagger: FittedFunction,
    target: Optional[MomentProblem] = None,
) -> FittedFunction:
    """
    estimate_h subject to E_n[q_dagger(T)(g2 - g1 h(S))] = 0.

    The constraint is imposed on `target` (default: p itself); cross-fitting
    passes the evaluation fold so the correction term vanishes where psi is
    averaged.
    """
    target = p if target is None else target
    td = target.dataset
    a, rhs, basis, _ = h_system(p, h_class, q_class, pen)

    q_t = q_dagger.evaluate(td.t)
    scale = 1.0 + float(np.sqrt(np.mean(td.g2**2)))
    if not np.any(q_t):
        logger.debug("Clever instrument is identically zero; returning the unconstrained fit")
        return basis.function(solve_psd(a, rhs, pen.jitter_scale))

    constraint = basis.design(td.s).T @ (td.g1 * q_t) / td.n
    goal = float(np.mean(q_t * td.g2))
    if np.linalg.norm(constraint) <= 1e-14 * scale:
        if abs(goal) > 1e-12 * scale:
            raise IdentificationError("Clever-instrument constraint is infeasible: q_dagger*g1 is orthogonal to the class")
        return basis.function(solve_psd(a, rhs, pen.jitter_scale))

    try:
        c, multiplier = solve_bordered(a, rhs, constraint, goal, pen.jitter_scale)
    except SingularSystemError as e:
        raise IdentificationError(f"Clever-instrument constraint is degenerate: {e}") from e

    h = basis.function(c)
    moment = float(np.mean(q_t * (td.g2 - td.g1 * h.evaluate(td.s))))
    if abs(moment) >= 1e-8 * scale:
        raise IdentificationError(f"Clever-instrument moment {moment:.3e} did not vanish after the constrained solve")
    logger.debug(f"estimate_h_clever: multiplier {multiplier:.4e}, constraint moment {moment:.2e}")
    return h


# =============================================================================
# OBJECTIVE
# =============================================================================

def minimax_objective(
    p: MomentProblem,
    h: FittedFunction,
    q_class,
    pen: PenaltyConfig,
    h_class=None,
) -> float:
    """
    The empirical penalized minimax objective at a candidate h:
    sup_q {...} + mu_n E_n[h^2] + gamma_h ||h||^2.

    For partially linear candidates pass h_class to include the theta ridge.
    """
    d = p.dataset
    pen = _resolve(pen, d.n)
    op = build_test_operator(q_class, d.t, pen.gamma_q, pen.jitter_scale)
    values = h.evaluate(d.s)
    u = d.g1 * values - d.g2
    objective = op.value(u) + pen.mu_n * float(np.mean(values**2)) + pen.gamma_h * h.class_norm_sq()
    if isinstance(h, PartiallyLinearFunction) and h_class is not None:
        objective += h_class.theta_ridge * float(h.theta @ h.theta)
    return objective
