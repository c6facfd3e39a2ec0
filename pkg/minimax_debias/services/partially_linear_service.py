"""
Partially Linear Service - debiased coefficients of h(X) = theta^T X_a + g(X_b)

The pipeline runs through the generic minimax solvers: S = [X_a | X_b],
T = Z, g1 = 1, g2 = Y, and theta_i is the coordinate-selector functional.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.kernel_ridge import KernelRidge
from sklearn.linear_model import Ridge

from ..core.config import settings
from ..core.exceptions import IdentificationError
from ..core.kernels import features, resolve_rkhs
from ..models.dataset import Dataset, MomentProblem, PLDataset
from ..models.function import FittedFunction, PartiallyLinearFunction, combine
from ..schemas.estimation import CrossfitConfig, PenaltyConfig, PLEstimate, QMomentDiagnostics
from ..schemas.function_class import GaussianRKHS, LinearSieve, PartiallyLinear
from ..schemas.functional import CoordinateSelector, MeanFunctional
from .debiased_service import fold_splits, variance_and_ci
from .minimax_service import estimate_h, estimate_xi, project_q

logger = logging.getLogger(__name__)

GAMMA_CONDITION_LIMIT = 1e8


def to_problem(d: PLDataset, index: int = 0) -> MomentProblem:
    """The moment problem E[h(X) | Z] = E[Y | Z] targeting theta_index."""
    dataset = Dataset(s=d.x, t=d.z, g1=np.ones(d.n), g2=d.y)
    return MomentProblem(dataset=dataset, functional=CoordinateSelector(index=index))


def pl_class(d_a: int, g_class, theta_ridge: float = 1e-8) -> PartiallyLinear:
    """Wrap a class on X_b as the partially linear class on [X_a | X_b]."""
    if isinstance(g_class, PartiallyLinear):
        if g_class.d_a != d_a:
            raise ValueError(f"Partially linear class has d_a={g_class.d_a}, data has {d_a}")
        return g_class
    return PartiallyLinear(d_a=d_a, g_class=g_class, theta_ridge=theta_ridge)


# =============================================================================
# NUISANCES
# =============================================================================

def pl_estimate_h_function(d: PLDataset, g_class, q_class, pen: PenaltyConfig) -> PartiallyLinearFunction:
    """The fitted theta^T x_a + g(x_b) itself."""
    return estimate_h(to_problem(d), pl_class(d.d_a, g_class), q_class, pen)


def pl_estimate_h(d: PLDataset, g_class, q_class, pen: PenaltyConfig) -> Tuple[np.ndarray, FittedFunction]:
    """(theta_tilde, g_hat) from the minimax fit over the partially linear class."""
    h = pl_estimate_h_function(d, g_class, q_class, pen)
    return np.array(h.theta), h.g


def pl_estimate_debias(
    d: PLDataset,
    xi_class,
    q_class,
    q_tilde_class,
    pen: PenaltyConfig,
) -> Tuple[List[FittedFunction], List[FittedFunction]]:
    """
    One (q_hat_i, xi_hat_i) pair per linear coordinate: xi_hat_i solves the
    debiasing problem for the coordinate selector m_i, q_hat_i projects it on Z.
    """
    pen = pen.for_sample_size(d.n)
    xi_spec = pl_class(d.d_a, xi_class)
    q_hat, xi_hat = [], []
    for i in range(d.d_a):
        p_i = to_problem(d, index=i)
        xi_i = estimate_xi(p_i, xi_spec, q_class, pen)
        q_hat.append(project_q(p_i, xi_i, q_tilde_class, pen.tilde_gamma_q, pen))
        xi_hat.append(xi_i)
    return q_hat, xi_hat


def _pl_psi(
    d: PLDataset,
    theta_tilde: np.ndarray,
    g_hat: FittedFunction,
    q_hat: Sequence[FittedFunction],
) -> np.ndarray:
    """psi_i = theta_tilde + (Y - theta_tilde^T X_a - g_hat(X_b)) q_hat(Z), one column per coordinate."""
    theta_tilde = np.ravel(theta_tilde)
    if theta_tilde.shape[0] != d.d_a or len(q_hat) != d.d_a:
        raise ValueError(f"Expected {d.d_a} coefficients and instruments, got {theta_tilde.shape[0]} and {len(q_hat)}")
    slack = d.y - d.x_a @ theta_tilde - g_hat.evaluate(d.x_b)
    q_values = np.column_stack([q.evaluate(d.z) for q in q_hat])
    return theta_tilde[None, :] + slack[:, None] * q_values


def _summarize(
    psi_by_fold: List[np.ndarray],
    theta_tilde: np.ndarray,
    alpha: float,
    k_folds: int,
    seed: int,
    g_hat=None,
    q_hat=(),
    xi_hat=(),
) -> PLEstimate:
    stacked = np.vstack(psi_by_fold)
    theta = stacked.mean(axis=0)
    n = stacked.shape[0]
    ses, cis = [], []
    for j in range(theta.shape[0]):
        se, ci = variance_and_ci([fold[:, j] for fold in psi_by_fold], float(theta[j]), alpha, n)
        ses.append(se)
        cis.append(ci)
    return PLEstimate(
        theta=theta.tolist(),
        se=ses,
        ci=cis,
        theta_tilde=np.ravel(theta_tilde).tolist(),
        alpha=alpha,
        n=n,
        k_folds=k_folds,
        seed=seed,
        g_hat=g_hat,
        q_hat=list(q_hat),
        xi_hat=list(xi_hat),
    )


def pl_debiased_theta(
    d: PLDataset,
    theta_tilde: np.ndarray,
    g_hat: FittedFunction,
    q_hat: Sequence[FittedFunction],
    rows: Optional[Sequence[int]] = None,
    alpha: float = 0.05,
) -> PLEstimate:
    """
    theta_hat = theta_tilde + E_n[(Y - theta_tilde^T X_a - g_hat(X_b)) q_hat(Z)]
    on the evaluation rows, which must not have been used to fit the nuisances.
    """
    data = d if rows is None else d.subset(rows)
    psi = _pl_psi(data, theta_tilde, g_hat, q_hat)
    return _summarize([psi], theta_tilde, alpha, k_folds=1, seed=0, g_hat=g_hat, q_hat=q_hat)


def pl_crossfit_estimate(d: PLDataset, cfg: CrossfitConfig) -> PLEstimate:
    """Cross-fitted (or simple-split) debiased partially linear coefficients."""
    g_class = cfg.h_class.g_class if isinstance(cfg.h_class, PartiallyLinear) else cfg.h_class
    psi_by_fold, thetas = [], []
    last = None
    for k, (train, held_out) in enumerate(fold_splits(d.n, cfg)):
        train_d = d.subset(train)
        pen = cfg.penalties.for_sample_size(train_d.n)
        h = pl_estimate_h_function(train_d, g_class, cfg.q_class, pen)
        q_hat, xi_hat = pl_estimate_debias(train_d, cfg.xi_class, cfg.q_class, cfg.q_tilde_class, pen)
        psi_by_fold.append(_pl_psi(d.subset(held_out), h.theta, h.g, q_hat))
        thetas.append(np.array(h.theta))
        last = (h.g, q_hat, xi_hat)
        logger.info(f"Partially linear fold {k}: theta_tilde {np.round(h.theta, 4).tolist()}")
    return _summarize(
        psi_by_fold,
        np.mean(thetas, axis=0),
        cfg.alpha,
        k_folds=cfg.n_splits,
        seed=cfg.seed,
        g_hat=last[0],
        q_hat=last[1],
        xi_hat=last[2],
    )


# =============================================================================
# ALTERNATIVE CONSTRUCTION AND DIAGNOSTICS
# =============================================================================

def chen_alternative_xi(
    d: PLDataset,
    rho_class,
    q_class,
    pen: PenaltyConfig,
) -> Tuple[List[FittedFunction], np.ndarray]:
    """
    xi_tilde = Gamma^-1 (X_a - rho(X_b)), where rho_i minimizes the projected
    distance of X_a^i - rho(X_b) onto Z and Gamma = E_n[q_bar q_bar^T] for the
    projections q_bar of the residuals onto Z.
    """
    pen = pen.for_sample_size(d.n).model_copy(update={"mu_n": 0.0})
    pl_problem = to_problem(d)
    residual_fns: List[PartiallyLinearFunction] = []
    for i in range(d.d_a):
        p_i = MomentProblem(
            dataset=Dataset(s=d.x_b, t=d.z, g1=np.ones(d.n), g2=d.x_a[:, i]),
            functional=MeanFunctional(),
        )
        rho_i = estimate_h(p_i, rho_class, q_class, pen)
        e_i = np.zeros(d.d_a)
        e_i[i] = 1.0
        residual_fns.append(PartiallyLinearFunction(theta=e_i, g=rho_i.scaled(-1.0)))

    q_bar = np.column_stack(
        [project_q(pl_problem, r, q_class, pen.tilde_gamma_q, pen).evaluate(d.z) for r in residual_fns]
    )
    gamma = q_bar.T @ q_bar / d.n
    residuals = np.column_stack([r.evaluate(d.x) for r in residual_fns])
    scale = float(np.mean(np.diag(residuals.T @ residuals / d.n)))
    eigenvalues = np.linalg.eigvalsh(gamma)
    condition = eigenvalues[-1] / eigenvalues[0] if eigenvalues[0] > 0 else np.inf
    if condition > GAMMA_CONDITION_LIMIT or eigenvalues[0] < settings.PL_GAMMA_RELATIVE_FLOOR * scale:
        raise IdentificationError(
            f"Gamma is singular (smallest eigenvalue {eigenvalues[0]:.3e}, condition {condition:.2e}); "
            "instruments carry no signal for the linear block"
        )

    gamma_inv = np.linalg.inv(gamma)
    xi_tilde: List[FittedFunction] = []
    for i in range(d.d_a):
        xi_i = residual_fns[0].scaled(gamma_inv[i, 0])
        for j in range(1, d.d_a):
            xi_i = combine(xi_i, residual_fns[j], 1.0, gamma_inv[i, j])
        xi_tilde.append(xi_i)
    return xi_tilde, gamma


def check_q_moments(q_hat: Sequence[FittedFunction], d: PLDataset, b_class=None) -> QMomentDiagnostics:
    """
    zero_given_xb: RMS of the regression of each q_hat_i(Z) on functions of X_b.
    identity_gap: Frobenius distance of E_n[q_hat(Z) X_a^T] from the identity.
    """
    b_class = LinearSieve(degree=2) if b_class is None else b_class
    q_values = np.column_stack([q.evaluate(d.z) for q in q_hat])

    fitted = []
    for j in range(q_values.shape[1]):
        if isinstance(b_class, GaussianRKHS):
            spec = resolve_rkhs(b_class, d.x_b)
            model = KernelRidge(alpha=1e-3 * d.n, kernel="rbf", gamma=1.0 / (2.0 * spec.bandwidth**2))
            fitted.append(model.fit(d.x_b, q_values[:, j]).predict(d.x_b))
        else:
            design = features(b_class, d.x_b)
            model = Ridge(alpha=1e-8 * d.n, fit_intercept=False)
            fitted.append(model.fit(design, q_values[:, j]).predict(design))
    zero_given_xb = float(np.sqrt(np.mean(np.square(fitted))))

    cross = q_values.T @ d.x_a / d.n
    identity_gap = float(np.linalg.norm(cross - np.eye(d.d_a), ord="fro"))
    return QMomentDiagnostics(zero_given_xb=zero_given_xb, identity_gap=identity_gap)
