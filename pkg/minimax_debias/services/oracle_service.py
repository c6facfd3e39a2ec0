"""
Oracle Service - exact population calculations on a finite-support problem

Every identity is checked in weighted coordinates: an S-function h becomes
sqrt(marg_S) * h and a T-function q becomes sqrt(marg_T) * q, so the
population inner products are Euclidean and the adjoint of P is a transpose.
"""
import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg

from ..core.exceptions import IdentificationError, OracleViolationError
from ..models.dataset import Dataset, MomentProblem
from ..models.discrete import DiscreteProblem, ThetaStarResult, XiSolution
from ..schemas.experiment import CheckResult
from ..schemas.functional import AuxWeighted

logger = logging.getLogger(__name__)

PINV_RTOL = 1e-10
FEASIBILITY_TOL = 1e-8


# =============================================================================
# OPERATORS
# =============================================================================

def p_matrix(dp: DiscreteProblem) -> np.ndarray:
    """[Ph](t) = E[g1 h(S) | T = t], as an m_t x m_s matrix."""
    return (dp.g1_table * dp.pmf).T / dp.marg_t[:, None]


def p_adjoint(dp: DiscreteProblem) -> np.ndarray:
    """[P*q](s) = E[g1 q(T) | S = s], as an m_s x m_t matrix."""
    return dp.g1_table * dp.pmf / dp.marg_s[:, None]


def _weighted_p(dp: DiscreteProblem) -> np.ndarray:
    """P in weighted coordinates; its transpose is P* there."""
    return np.sqrt(dp.marg_t)[:, None] * p_matrix(dp) / np.sqrt(dp.marg_s)[None, :]


def riesz_alpha(dp: DiscreteProblem) -> np.ndarray:
    """alpha(s) = m_weights(s) / marg_S(s)."""
    return dp.m_weights / dp.marg_s


def inner_s(dp: DiscreteProblem, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(dp.marg_s * a * b))


def inner_t(dp: DiscreteProblem, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(dp.marg_t * a * b))


def conditional_g2(dp: DiscreteProblem) -> np.ndarray:
    """r0(t) = E[g2 | T = t]."""
    return (dp.g2_table * dp.pmf).sum(axis=0) / dp.marg_t


def null_space_p(dp: DiscreteProblem) -> np.ndarray:
    """Columns spanning N(P) in S-coordinates."""
    basis = scipy.linalg.null_space(_weighted_p(dp), rcond=PINV_RTOL)
    return basis / np.sqrt(dp.marg_s)[:, None]


def null_space_p_adjoint(dp: DiscreteProblem) -> np.ndarray:
    """Columns spanning N(P*) in T-coordinates."""
    basis = scipy.linalg.null_space(_weighted_p(dp).T, rcond=PINV_RTOL)
    return basis / np.sqrt(dp.marg_t)[:, None]


# =============================================================================
# NUISANCES AND TARGET
# =============================================================================

def solve_xi0(dp: DiscreteProblem) -> XiSolution:
    """
    Minimum-norm least-squares solution of P*P xi = alpha.

    feasible is True when the residual norm is below 1e-8; infeasibility means
    the target is not strongly identified and is reported, not raised.
    """
    p_w = _weighted_p(dp)
    a_w = p_w.T @ p_w
    alpha_w = np.sqrt(dp.marg_s) * riesz_alpha(dp)
    xi_w = scipy.linalg.pinv(a_w, rtol=PINV_RTOL) @ alpha_w
    residual = float(np.linalg.norm(a_w @ xi_w - alpha_w))
    feasible = residual < FEASIBILITY_TOL
    if not feasible:
        logger.info(f"{dp.name}: alpha is outside the range of P*P (residual {residual:.3e})")
    return XiSolution(xi0=xi_w / np.sqrt(dp.marg_s), feasible=feasible, residual=residual)


def q_dagger(
    dp: DiscreteProblem,
    xi: XiSolution,
    n_checks: int = 20,
    seed: int = 0,
) -> np.ndarray:
    """
    q_dagger = P xi0, checked to be the minimum-norm solution of P* q = alpha
    against n_checks random elements q_dagger + N(P*).
    """
    if not xi.feasible:
        raise IdentificationError(f"{dp.name}: no xi0 exists, so q_dagger is undefined")
    q = p_matrix(dp) @ xi.xi0

    null = null_space_p_adjoint(dp)
    if null.shape[1]:
        rng = np.random.default_rng(seed)
        base_norm = np.sqrt(inner_t(dp, q, q))
        for _ in range(n_checks):
            other = q + null @ rng.normal(size=null.shape[1])
            if np.sqrt(inner_t(dp, other, other)) < base_norm - 1e-10:
                raise OracleViolationError(f"{dp.name}: found an element of Q0 with smaller norm than q_dagger")
    return q


def theta_star(dp: DiscreteProblem, xi: Optional[XiSolution] = None) -> ThetaStarResult:
    """
    theta* = sum_s m_weights h0 for the minimum-norm h0 solving P h = r0,
    cross-checked against E[q_dagger(T) g2] when xi0 exists.
    """
    p_w = _weighted_p(dp)
    r0 = conditional_g2(dp)
    h_w = scipy.linalg.pinv(p_w, rtol=PINV_RTOL) @ (np.sqrt(dp.marg_t) * r0)
    h0 = h_w / np.sqrt(dp.marg_s)
    slack = p_matrix(dp) @ h0 - r0
    if np.sqrt(inner_t(dp, slack, slack)) >= FEASIBILITY_TOL:
        raise IdentificationError(f"{dp.name}: the moment equation P h = E[g2|T] has no solution")

    value = float(dp.m_weights @ h0)
    xi = solve_xi0(dp) if xi is None else xi
    via_q = None
    if xi.feasible:
        via_q = inner_t(dp, q_dagger(dp, xi), r0)
        if abs(via_q - value) > 1e-10 * (1.0 + abs(value)):
            raise OracleViolationError(
                f"{dp.name}: theta* via h0 ({value:.12f}) and via q_dagger ({via_q:.12f}) disagree"
            )
    else:
        logger.warning(f"{dp.name}: theta* depends on the choice of h0; no q_dagger cross-check")
    return ThetaStarResult(value=value, h0=h0, r0=r0, via_q_dagger=via_q)


def expected_psi(dp: DiscreteProblem, h: np.ndarray, q: np.ndarray) -> float:
    """E[m(W; h) + q(T)(g2 - g1 h(S))] under the pmf."""
    slack = dp.g2_table - dp.g1_table * h[:, None]
    return float(dp.m_weights @ h + np.sum(dp.pmf * slack * q[None, :]))


def xi_objective(dp: DiscreteProblem, xi: np.ndarray) -> float:
    """1/2 E[(P xi)(T)^2] - E[m(W; xi)]."""
    p_xi = p_matrix(dp) @ xi
    return 0.5 * inner_t(dp, p_xi, p_xi) - float(dp.m_weights @ xi)


def verify_mixed_bias(
    dp: DiscreteProblem,
    h: np.ndarray,
    xi: np.ndarray,
    theta: Optional[ThetaStarResult] = None,
    xi_solution: Optional[XiSolution] = None,
) -> tuple[float, float]:
    """
    lhs = E[psi(W; h, P xi)] - theta*, rhs = -<P(h - h0), P(xi - xi0)>_T.

    Expanding E[psi] with P*P xi0 = alpha and P h0 = r0 gives the product of
    the two projected errors with a negative sign.
    """
    xi_solution = solve_xi0(dp) if xi_solution is None else xi_solution
    if not xi_solution.feasible:
        raise IdentificationError(f"{dp.name}: mixed bias needs a strongly identified target")
    theta = theta_star(dp, xi_solution) if theta is None else theta
    p = p_matrix(dp)
    lhs = expected_psi(dp, h, p @ xi) - theta.value
    rhs = -inner_t(dp, p @ (h - theta.h0), p @ (xi - xi_solution.xi0))
    return lhs, rhs


def neyman_derivative(
    dp: DiscreteProblem,
    h: np.ndarray,
    q: np.ndarray,
    dh: np.ndarray,
    dq: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Central difference of E[psi] along the direction (dh, dq)."""
    up = expected_psi(dp, h + step * dh, q + step * dq)
    down = expected_psi(dp, h - step * dh, q - step * dq)
    return (up - down) / (2.0 * step)


# =============================================================================
# SAMPLING AND LOADING
# =============================================================================

def sample_from(dp: DiscreteProblem, n: int, seed: int) -> Dataset:
    """
    n iid (S, T) draws from the pmf with g1, g2 read from the tables.

    The Riesz representer alpha(S) is attached as aux column "alpha".
    """
    if n < 1:
        raise ValueError(f"Sample size must be positive, got {n}")
    rng = np.random.default_rng(seed)
    flat = dp.pmf.ravel()
    cells = rng.choice(flat.shape[0], size=n, p=flat / flat.sum())
    si, ti = np.divmod(cells, dp.m_t)
    return Dataset(
        s=dp.s_support[si],
        t=dp.t_support[ti],
        g1=dp.g1_table[si, ti],
        g2=dp.g2_table[si, ti],
        aux={"alpha": riesz_alpha(dp)[si]},
    )


def sample_problem(dp: DiscreteProblem, n: int, seed: int) -> MomentProblem:
    """sample_from with the functional m(W; h) = alpha(S) h(S)."""
    return MomentProblem(dataset=sample_from(dp, n, seed), functional=AuxWeighted(column="alpha"))


def load_discrete_problem(path: str | Path) -> DiscreteProblem:
    """
    Load a DiscreteProblem from JSON with keys s_support, t_support, pmf,
    g1_table (optional, default ones), g2_table, m_weights (optional, default
    the mean functional) and name.
    """
    path = Path(path)
    raw = json.loads(path.read_text(encoding="utf-8"))
    missing = [k for k in ("s_support", "t_support", "pmf", "g2_table") if k not in raw]
    if missing:
        raise ValueError(f"{path} is missing keys {missing}")
    pmf = np.asarray(raw["pmf"], dtype=float)
    return DiscreteProblem(
        s_support=raw["s_support"],
        t_support=raw["t_support"],
        pmf=pmf,
        g1_table=raw.get("g1_table", np.ones_like(pmf)),
        g2_table=raw["g2_table"],
        m_weights=raw.get("m_weights", pmf.sum(axis=1)),
        name=raw.get("name", path.stem),
    )


# =============================================================================
# REFERENCE PROBLEMS
# =============================================================================

def reference_problems() -> List[DiscreteProblem]:
    """Identity P, a correlated 2x2 design and a rank-deficient 4x3 design."""
    support3 = np.array([-1.0, 0.0, 1.0])
    pmf3 = np.eye(3) / 3.0
    identity = DiscreteProblem(
        s_support=support3,
        t_support=support3,
        pmf=pmf3,
        g1_table=np.ones((3, 3)),
        g2_table=np.tile((support3 + 0.5 * support3**2)[:, None], (1, 3)),
        m_weights=pmf3.sum(axis=1) * support3,
        name="identity",
    )

    support2 = np.array([-1.0, 1.0])
    pmf2 = np.array([[0.4, 0.1], [0.1, 0.4]])
    correlated = DiscreteProblem(
        s_support=support2,
        t_support=support2,
        pmf=pmf2,
        g1_table=np.ones((2, 2)),
        g2_table=support2[:, None] + 0.25 * support2[None, :],
        m_weights=pmf2.sum(axis=1) * support2,
        name="correlated_2x2",
    )

    s4 = np.array([-1.5, -0.5, 0.5, 1.5])
    t3 = np.array([-1.0, 0.0, 1.0])
    weights = np.array(
        [
            [4.0, 2.0, 1.0],
            [2.0, 4.0, 1.0],
            [1.0, 3.0, 3.0],
            [1.0, 1.0, 5.0],
        ]
    )
    pmf43 = weights / weights.sum()
    g1_43 = 1.0 + 0.2 * np.abs(s4)[:, None] * np.ones((1, 3))
    h_star = np.sin(s4) + 0.3 * s4**2
    g2_43 = g1_43 * h_star[:, None] + 0.5 * (t3[None, :] - 0.2)
    draft = DiscreteProblem(
        s_support=s4,
        t_support=t3,
        pmf=pmf43,
        g1_table=g1_43,
        g2_table=g2_43,
        m_weights=pmf43.sum(axis=1),
        name="rank_deficient_4x3",
    )
    # alpha = P* q for a fixed q puts alpha in the range of P*
    alpha = p_adjoint(draft) @ np.array([1.0, -0.5, 0.25])
    rank_deficient = DiscreteProblem(
        s_support=s4,
        t_support=t3,
        pmf=pmf43,
        g1_table=g1_43,
        g2_table=g2_43,
        m_weights=draft.marg_s * alpha,
        name="rank_deficient_4x3",
    )
    return [identity, correlated, rank_deficient]


# =============================================================================
# IDENTITY SUITE
# =============================================================================

def _check(name: str, dp: DiscreteProblem, error: float, tolerance: float, detail: str = "") -> CheckResult:
    passed = bool(np.isfinite(error) and error < tolerance)
    if not passed:
        logger.warning(f"{dp.name}: {name} failed (error {error:.3e}, tolerance {tolerance:.1e})")
    return CheckResult(name=name, problem=dp.name, passed=passed, max_error=float(error), tolerance=tolerance, detail=detail)


def check_problem(dp: DiscreteProblem, n_pairs: int = 50, seed: int = 0) -> List[CheckResult]:
    """Run every exact identity on one problem."""
    rng = np.random.default_rng(seed)
    results: List[CheckResult] = []
    p = p_matrix(dp)
    p_star = p_adjoint(dp)

    adjoint_error = 0.0
    for _ in range(20):
        h, q = rng.normal(size=dp.m_s), rng.normal(size=dp.m_t)
        adjoint_error = max(adjoint_error, abs(inner_t(dp, p @ h, q) - inner_s(dp, h, p_star @ q)))
    results.append(_check("adjointness", dp, adjoint_error, 1e-12))

    xi = solve_xi0(dp)
    if not xi.feasible:
        results.append(_check("strong_identification", dp, xi.residual, FEASIBILITY_TOL, "alpha outside R(P*P)"))
        return results

    alpha = riesz_alpha(dp)
    null_p = null_space_p(dp)

    # Every minimizer of the xi objective solves P*P xi = alpha
    equivalence_error = float(np.max(np.abs(p_star @ (p @ xi.xi0) - alpha)))
    base_objective = xi_objective(dp, xi.xi0)
    for _ in range(20):
        shifted = xi.xi0 + (null_p @ rng.normal(size=null_p.shape[1]) if null_p.shape[1] else 0.0)
        equivalence_error = max(
            equivalence_error,
            float(np.max(np.abs(p_star @ (p @ shifted) - alpha))),
            abs(xi_objective(dp, shifted) - base_objective),
        )
        if xi_objective(dp, xi.xi0 + rng.normal(size=dp.m_s)) < base_objective - 1e-10:
            equivalence_error = np.inf
    results.append(_check("xi_normal_equations", dp, equivalence_error, 1e-10))

    try:
        q = q_dagger(dp, xi, seed=seed)
        min_norm_error = float(np.max(np.abs(p_star @ q - alpha)))
        results.append(_check("q_dagger_min_norm", dp, min_norm_error, 1e-10))
    except OracleViolationError as e:
        results.append(_check("q_dagger_min_norm", dp, np.inf, 1e-10, str(e)))
        return results

    theta = theta_star(dp, xi)

    bias_error = 0.0
    for _ in range(n_pairs):
        lhs, rhs = verify_mixed_bias(dp, rng.normal(size=dp.m_s), rng.normal(size=dp.m_s), theta, xi)
        bias_error = max(bias_error, abs(lhs - rhs))
    results.append(_check("mixed_bias", dp, bias_error, 1e-10))

    orthogonality_error = 0.0
    for _ in range(20):
        h_dagger = theta.h0 + (null_p @ rng.normal(size=null_p.shape[1]) if null_p.shape[1] else 0.0)
        moment = float(np.sum(dp.pmf * (dp.g2_table - dp.g1_table * h_dagger[:, None]) * q[None, :]))
        orthogonality_error = max(orthogonality_error, abs(moment))
    results.append(_check("orthogonality", dp, orthogonality_error, 1e-12))

    neyman_error = 0.0
    for _ in range(20):
        derivative = neyman_derivative(dp, theta.h0, q, rng.normal(size=dp.m_s), rng.normal(size=dp.m_t))
        neyman_error = max(neyman_error, abs(derivative))
    results.append(_check("neyman_orthogonality", dp, neyman_error, 1e-8))
    return results


def run_identity_suite(
    problems: Optional[Sequence[DiscreteProblem]] = None,
    n_pairs: int = 50,
    seed: int = 0,
) -> List[CheckResult]:
    """Every exact identity on every problem (the reference set by default)."""
    problems = reference_problems() if problems is None else problems
    results: List[CheckResult] = []
    for dp in problems:
        results.extend(check_problem(dp, n_pairs=n_pairs, seed=seed))
    failed = sum(not r.passed for r in results)
    logger.info(f"Identity suite: {len(results) - failed}/{len(results)} checks passed on {len(problems)} problems")
    return results
