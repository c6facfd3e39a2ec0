"""
DGP Service - simulation designs and their known answers

The scalar IV design: T ~ N(0, sigma_t), U ~ N(0, sigma_u),
S = rho T + (1 - rho) U + zeta, y = h0(S) + U + nu, with the average
finite-difference derivative of h0 as target. A Gaussian partially linear IV
design backs the partially linear pipeline.
"""
import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..core.config import settings
from ..models.dataset import Dataset, MomentProblem, PLDataset
from ..models.function import FeatureFunction
from ..schemas.estimation import PenaltyConfig
from ..schemas.experiment import CheckResult, DgpConfig, OracleNuisances, OracleTheta
from ..schemas.function_class import LinearSieve
from ..schemas.functional import AverageFiniteDifference
from .minimax_service import estimate_xi, project_q

logger = logging.getLogger(__name__)

H0_FORMS: Dict[str, str] = {
    "abs": "|s|",
    "twodpoly": "-1.5 s + 0.9 s^2",
    "sigmoid": "2 / (1 + exp(-2 s))",
    "sin": "sin(s)",
    "linear": "s",
}

MC_BATCH = 1_000_000


def h0_eval(kind: str, s) -> np.ndarray:
    """The structural function h0 of the named kind."""
    s = np.asarray(s, dtype=float)
    if kind == "abs":
        return np.abs(s)
    if kind in ("twodpoly", "2dpoly"):
        return -1.5 * s + 0.9 * s**2
    if kind == "sigmoid":
        return 2.0 / (1.0 + np.exp(-2.0 * s))
    if kind == "sin":
        return np.sin(s)
    if kind == "linear":
        return s.copy()
    raise ValueError(f"Unknown h0 kind '{kind}'")


def _draw(cfg: DgpConfig, n: int, rng: np.random.Generator):
    t = rng.normal(0.0, cfg.sigma_t, n)
    u = rng.normal(0.0, cfg.sigma_u, n)
    zeta = rng.normal(0.0, cfg.zeta_sd, n)
    nu = rng.normal(0.0, cfg.nu_sd, n)
    s = cfg.rho * t + (1.0 - cfg.rho) * u + zeta
    return t, u, s, nu


def sample(cfg: DgpConfig) -> Dataset:
    """
    One draw of the design: s = S, t = T (or S itself when exogenous),
    g1 = 1, g2 = y.
    """
    rng = np.random.default_rng(cfg.seed)
    t, u, s, nu = _draw(cfg, cfg.n, rng)
    y = h0_eval(cfg.h0_kind, s) + u + nu
    instrument = s if cfg.exogenous else t
    return Dataset(s=s, t=instrument, g1=np.ones(cfg.n), g2=y)


def sample_problem(cfg: DgpConfig) -> MomentProblem:
    """sample() paired with the average finite-difference functional."""
    return MomentProblem(dataset=sample(cfg), functional=AverageFiniteDifference(eps=cfg.eps))


def analytic_theta(cfg: DgpConfig) -> Optional[float]:
    """Closed-form theta* where one exists (S is Gaussian with variance var_s)."""
    if cfg.h0_kind == "linear":
        return 1.0
    if cfg.h0_kind == "twodpoly":
        # E[2 s] = 0
        return -1.5
    if cfg.h0_kind == "abs":
        # S symmetric: the difference quotient of |s| is odd
        return 0.0
    if cfg.h0_kind == "sin":
        return float(np.exp(-cfg.var_s / 2.0) * np.sin(cfg.eps) / cfg.eps)
    return None


def oracle_theta(cfg: DgpConfig, n_mc: Optional[int] = None, seed: int = 0) -> OracleTheta:
    """Monte Carlo theta* = E[(h0(S + eps) - h0(S - eps)) / (2 eps)] over fresh draws."""
    n_mc = settings.ORACLE_MC_N if n_mc is None else n_mc
    if n_mc < 1:
        raise ValueError(f"Monte Carlo size must be positive, got {n_mc}")
    rng = np.random.default_rng(seed)
    total, total_sq, remaining = 0.0, 0.0, n_mc
    while remaining > 0:
        batch = min(remaining, MC_BATCH)
        _, _, s, _ = _draw(cfg, batch, rng)
        quotient = (h0_eval(cfg.h0_kind, s + cfg.eps) - h0_eval(cfg.h0_kind, s - cfg.eps)) / (2.0 * cfg.eps)
        total += float(quotient.sum())
        total_sq += float((quotient**2).sum())
        remaining -= batch
    mean = total / n_mc
    variance = max(total_sq / n_mc - mean**2, 0.0)
    mc_se = float(np.sqrt(variance / n_mc))
    logger.debug(f"Monte Carlo theta* for {cfg.h0_kind}, rho={cfg.rho}: {mean:.6f} (se {mc_se:.2e})")
    return OracleTheta(value=mean, mc_se=mc_se, source="monte_carlo", n_mc=n_mc)


def oracle_nuisances(cfg: DgpConfig) -> OracleNuisances:
    """Slopes of a0(S) = S / Var(S), q0(T) = T / (rho sigma_t^2), xi0(S) = S / (rho^2 sigma_t^2)."""
    return OracleNuisances(
        a0_slope=1.0 / cfg.var_s,
        q0_slope=1.0 / (cfg.rho * cfg.sigma_t**2),
        xi0_slope=1.0 / (cfg.rho**2 * cfg.sigma_t**2),
        var_s=cfg.var_s,
    )


def tsls(d: Dataset) -> float:
    """Just-identified IV slope sum T y / sum T S (no intercept)."""
    t, s = d.t[:, 0], d.s[:, 0]
    denominator = float(t @ s)
    if abs(denominator) < 1e-12 * max(1.0, float(np.sqrt((t @ t) * (s @ s)))):
        raise ValueError("Instrument is orthogonal to the regressor; 2SLS is undefined")
    return float(t @ d.g2) / denominator


# =============================================================================
# PARTIALLY LINEAR DESIGN
# =============================================================================

PL_NOISE_SD = 0.5
PL_XB_LOADING = 0.5
PL_CONFOUNDING = 0.5


def _g_star(kind: str, x_b: np.ndarray) -> np.ndarray:
    if kind == "sin":
        return np.sin(x_b)
    if kind == "linear":
        return 0.5 * x_b
    if kind == "zero":
        return np.zeros_like(x_b)
    raise ValueError(f"Unknown g* kind '{kind}'")


def pl_sample(
    n: int,
    seed: int,
    theta_star: Sequence[float] = (1.0,),
    instrument_strength: float = 1.0,
    g_kind: str = "sin",
    confounded: bool = True,
    noise_sd: float = PL_NOISE_SD,
) -> PLDataset:
    """
    Z1 ~ N(0, I_{d_a}), X_b ~ N(0, 1), U ~ N(0, 1),
    X_a = pi Z1 + 0.5 X_b + c U + e, Y = theta*^T X_a + g*(X_b) + U + nu,
    with instruments Z = [Z1, X_b] and c = 0.5 when confounded.

    For every g*, E[X_a | Z] = pi Z1 + 0.5 X_b, so rho0(X_b) = 0.5 X_b,
    Gamma = pi^2 I and q0(Z) = Z1 / pi.
    """
    if not 0 < instrument_strength <= 1:
        raise ValueError(f"instrument_strength must lie in (0, 1], got {instrument_strength}")
    theta = np.atleast_1d(np.asarray(theta_star, dtype=float))
    d_a = theta.shape[0]
    rng = np.random.default_rng(seed)
    z1 = rng.normal(size=(n, d_a))
    x_b = rng.normal(size=(n, 1))
    u = rng.normal(size=n)
    e = rng.normal(0.0, noise_sd, size=(n, d_a))
    nu = rng.normal(0.0, 0.1, size=n)
    c = PL_CONFOUNDING if confounded else 0.0
    x_a = instrument_strength * z1 + PL_XB_LOADING * x_b + c * u[:, None] + e
    y = x_a @ theta + _g_star(g_kind, x_b[:, 0]) + u + nu
    return PLDataset(x_a=x_a, x_b=x_b, z=np.hstack([z1, x_b]), y=y)


def pl_oracle_gamma(d_a: int, instrument_strength: float) -> np.ndarray:
    """Gamma = Var(E[X_a - rho0(X_b) | Z]) = pi^2 I."""
    return instrument_strength**2 * np.eye(d_a)


def pl_oracle_q(d_a: int, instrument_strength: float) -> List[FeatureFunction]:
    """q0_i(Z) = Z1_i / pi as linear functions of Z = [Z1, X_b]."""
    spec = LinearSieve(degree=1, intercept=False)
    out = []
    for i in range(d_a):
        weights = np.zeros(d_a + 1)
        weights[i] = 1.0 / instrument_strength
        out.append(FeatureFunction(weights=weights, spec=spec, input_dim=d_a + 1))
    return out


# =============================================================================
# SLOPE SUITE
# =============================================================================

def run_slope_suite(
    seeds: Sequence[int] = tuple(range(20)),
    n: int = 2000,
    rho: float = 0.5,
    sigma_t: float = 2.0,
) -> List[CheckResult]:
    """
    Average xi-hat and q-hat slopes over seeds with linear classes, against
    the closed forms 1/(rho^2 sigma_t^2) and 1/(rho sigma_t^2).
    """
    linear = LinearSieve(degree=1, intercept=False)
    pen = PenaltyConfig().for_sample_size(n)
    xi_slopes, q_slopes = [], []
    oracle = None
    for seed in seeds:
        cfg = DgpConfig(rho=rho, sigma_t=sigma_t, n=n, seed=seed)
        oracle = oracle_nuisances(cfg)
        p = sample_problem(cfg)
        xi = estimate_xi(p, linear, linear, pen)
        q = project_q(p, xi, linear, pen.tilde_gamma_q, pen)
        xi_slopes.append(float(xi.weights[0]))
        q_slopes.append(float(q.weights[0]))

    xi_error = abs(float(np.mean(xi_slopes)) - oracle.xi0_slope)
    q_error = abs(float(np.mean(q_slopes)) - oracle.q0_slope)
    results = [
        CheckResult(
            name="xi_slope",
            problem=f"dgp rho={rho} n={n}",
            passed=xi_error < 0.15,
            max_error=xi_error,
            tolerance=0.15,
            detail=f"mean slope {np.mean(xi_slopes):.4f} vs {oracle.xi0_slope:.4f}",
        ),
        CheckResult(
            name="q_slope",
            problem=f"dgp rho={rho} n={n}",
            passed=q_error < 0.10,
            max_error=q_error,
            tolerance=0.10,
            detail=f"mean slope {np.mean(q_slopes):.4f} vs {oracle.q0_slope:.4f}",
        ),
    ]
    for r in results:
        logger.info(f"Slope check {r.name}: {r.detail} ({'ok' if r.passed else 'FAILED'})")
    return results
