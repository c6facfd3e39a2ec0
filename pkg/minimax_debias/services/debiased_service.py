"""
Debiased Service - influence function, cross-fitting, variance and TMLE

psi(W; h, q) = m(W; h) + q(T) (g2 - g1 h(S)) is averaged on rows whose
nuisances were fit elsewhere.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm
from sklearn.model_selection import KFold

from ..core.exceptions import EstimationError, IdentificationError
from ..core.workers import parallel_map
from ..models.artifacts import FoldArtifacts
from ..models.dataset import MomentProblem
from ..models.function import FittedFunction, combine
from ..schemas.estimation import CrossfitConfig, ThetaEstimate
from ..schemas.functional import row_index
from .function_space_service import save_function
from .minimax_service import estimate_h, estimate_h_clever, estimate_xi, project_q

logger = logging.getLogger(__name__)


def psi_values(
    h: FittedFunction,
    q: FittedFunction,
    p: MomentProblem,
    rows: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """psi_i = m(W_i; h) + q(T_i) (g2_i - g1_i h(S_i)) on the given rows."""
    d = p.dataset
    idx = row_index(d, rows)
    direct = p.functional.evaluate(h.evaluate, d, idx)
    slack = d.g2[idx] - d.g1[idx] * h.evaluate(d.s[idx])
    return direct + q.evaluate(d.t[idx]) * slack


def _moment_scale(p: MomentProblem, rows: np.ndarray) -> float:
    return 1.0 + float(np.sqrt(np.mean(p.dataset.g2[rows] ** 2)))


# =============================================================================
# FOLDS
# =============================================================================

def fold_splits(n: int, cfg: CrossfitConfig) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    (train, eval) index pairs.

    crossfit: K shuffled folds. simple_split: the first pair of a shuffled
    two-way split, so nuisances see one half and psi is averaged on the other.
    """
    k = 2 if cfg.split_mode == "simple_split" else cfg.k_folds
    if n < 2 * k:
        raise ValueError(f"Need n >= {2 * k} observations for {k} folds, got {n}")
    splitter = KFold(n_splits=k, shuffle=True, random_state=cfg.seed)
    splits = [(np.sort(train), np.sort(test)) for train, test in splitter.split(np.zeros((n, 1)))]
    return splits[:1] if cfg.split_mode == "simple_split" else splits


def _fit_fold(p: MomentProblem, cfg: CrossfitConfig, fold: int, train: np.ndarray, held_out: np.ndarray) -> FoldArtifacts:
    train_p = p.subset(train)
    eval_p = p.subset(held_out)
    pen = cfg.penalties.for_sample_size(train_p.n)
    try:
        xi = estimate_xi(train_p, cfg.xi_class, cfg.q_class, pen)
        q = project_q(train_p, xi, cfg.q_tilde_class, pen.tilde_gamma_q, pen)
        if cfg.clever_instrument:
            h = estimate_h_clever(train_p, cfg.h_class, cfg.q_class, pen, q, target=eval_p)
        else:
            h = estimate_h(train_p, cfg.h_class, cfg.q_class, pen)
    except EstimationError as e:
        raise type(e)(f"fold {fold}: {e}") from e
    logger.info(f"Fold {fold}: nuisances fit on {train.shape[0]} rows, evaluated on {held_out.shape[0]}")
    return FoldArtifacts(fold=fold, train_rows=train, eval_rows=held_out, h=h, xi=xi, q=q)


def fit_folds(p: MomentProblem, cfg: CrossfitConfig, threads: Optional[int] = 1) -> List[FoldArtifacts]:
    """Fit every fold's nuisances, in fold order."""
    splits = fold_splits(p.n, cfg)
    jobs = [(k, train, held_out) for k, (train, held_out) in enumerate(splits)]
    return parallel_map(lambda job: _fit_fold(p, cfg, *job), jobs, threads)


# =============================================================================
# VARIANCE
# =============================================================================

def variance_and_ci(
    psi_by_fold: Sequence[np.ndarray],
    theta: float,
    alpha: float,
    n: int,
) -> Tuple[float, Tuple[float, float]]:
    """
    sigma^2 = (1/K) sum_k fold-mean (theta - psi)^2, se = sigma / sqrt(n),
    Wald interval theta +/- z_{1-alpha/2} se.
    """
    if n <= 0:
        raise ValueError("Variance needs at least one evaluated observation")
    folds = [np.asarray(f, dtype=float) for f in psi_by_fold]
    if not folds or any(f.size == 0 for f in folds):
        raise ValueError("Every fold needs at least one psi value")
    if not all(np.all(np.isfinite(f)) for f in folds):
        raise ValueError("psi values must be finite")
    sigma_sq = float(np.mean([np.mean((theta - f) ** 2) for f in folds]))
    se = float(np.sqrt(sigma_sq / n))
    z = float(norm.ppf(1.0 - alpha / 2.0))
    return se, (theta - z * se, theta + z * se)


# =============================================================================
# TMLE
# =============================================================================

def tmle_step(
    h0: FittedFunction,
    xi: FittedFunction,
    q: FittedFunction,
    p: MomentProblem,
    rows: Optional[Sequence[int]] = None,
) -> Tuple[float, FittedFunction]:
    """
    One fluctuation h1 = h0 + eps xi with eps chosen so that
    E_n[q(T)(g2 - g1 h1(S))] = 0 on the given rows.
    """
    d = p.dataset
    idx = row_index(d, rows)
    q_t = q.evaluate(d.t[idx])
    g1, g2, s = d.g1[idx], d.g2[idx], d.s[idx]
    scale = _moment_scale(p, idx)

    numerator = float(np.mean(q_t * (g2 - g1 * h0.evaluate(s))))
    denominator = float(np.mean(q_t * g1 * xi.evaluate(s)))
    if abs(denominator) < 1e-12 * scale:
        raise IdentificationError(f"TMLE denominator {denominator:.3e} is numerically zero")

    epsilon = numerator / denominator
    h1 = combine(h0, xi, 1.0, epsilon)
    moment = float(np.mean(q_t * (g2 - g1 * h1.evaluate(s))))
    if abs(moment) >= 1e-10 * scale:
        raise EstimationError(f"TMLE moment {moment:.3e} did not vanish after the update")
    logger.debug(f"tmle_step: epsilon {epsilon:.4e}, post-update moment {moment:.2e}")
    return epsilon, h1


# =============================================================================
# ESTIMATORS
# =============================================================================

def _estimate(
    method: str,
    values_by_fold: List[np.ndarray],
    cfg: CrossfitConfig,
    artifacts: List[FoldArtifacts],
    with_se: bool,
) -> ThetaEstimate:
    n_eval = int(sum(v.shape[0] for v in values_by_fold))
    theta = float(np.concatenate(values_by_fold).mean())
    se, ci = variance_and_ci(values_by_fold, theta, cfg.alpha, n_eval) if with_se else (None, None)
    return ThetaEstimate(
        method=method,
        theta=theta,
        se=se,
        ci=ci,
        alpha=cfg.alpha,
        n=n_eval,
        k_folds=cfg.n_splits,
        seed=cfg.seed,
        fold_thetas=[float(v.mean()) for v in values_by_fold],
        fold_artifacts=artifacts,
    )


def crossfit_estimate(p: MomentProblem, cfg: CrossfitConfig, threads: Optional[int] = 1) -> ThetaEstimate:
    """The cross-fitted doubly robust estimate with its Wald interval."""
    artifacts = fit_folds(p, cfg, threads)
    psi = [psi_values(a.h, a.q, p, a.eval_rows) for a in artifacts]
    estimate = _estimate("dr", psi, cfg, artifacts, with_se=True)
    logger.info(f"dr estimate {estimate.theta:.5f} (se {estimate.se:.5f}) over {len(artifacts)} fold(s)")
    return estimate


def estimate_all_methods(
    p: MomentProblem, cfg: CrossfitConfig, threads: Optional[int] = 1
) -> Dict[str, ThetaEstimate]:
    """dr, tmle, ipw and direct estimates sharing one set of fold nuisances."""
    fitted = fit_folds(p, cfg, threads)
    d = p.dataset

    artifacts: List[FoldArtifacts] = []
    for a in fitted:
        epsilon, h1 = tmle_step(a.h, a.xi, a.q, p, a.eval_rows)
        artifacts.append(
            FoldArtifacts(
                fold=a.fold,
                train_rows=a.train_rows,
                eval_rows=a.eval_rows,
                h=a.h,
                xi=a.xi,
                q=a.q,
                epsilon=epsilon,
                h1=h1,
            )
        )

    dr = [psi_values(a.h, a.q, p, a.eval_rows) for a in artifacts]
    tmle_direct = [p.functional.evaluate(a.h1.evaluate, d, a.eval_rows) for a in artifacts]
    tmle_psi = [psi_values(a.h1, a.q, p, a.eval_rows) for a in artifacts]
    ipw = [a.q.evaluate(d.t[a.eval_rows]) * d.g2[a.eval_rows] for a in artifacts]
    direct = [p.functional.evaluate(a.h.evaluate, d, a.eval_rows) for a in artifacts]

    tmle = _estimate("tmle", tmle_direct, cfg, artifacts, with_se=False)
    se, ci = variance_and_ci(tmle_psi, tmle.theta, cfg.alpha, tmle.n)
    tmle = tmle.model_copy(update={"se": se, "ci": ci})

    return {
        "dr": _estimate("dr", dr, cfg, artifacts, with_se=True),
        "tmle": tmle,
        "ipw": _estimate("ipw", ipw, cfg, artifacts, with_se=False),
        "direct": _estimate("direct", direct, cfg, artifacts, with_se=False),
    }


def save_fold_nuisances(estimate: ThetaEstimate, directory: str | Path) -> List[Path]:
    """Write each fold's h, xi, q (and h1 when present) as JSON records."""
    directory = Path(directory)
    written: List[Path] = []
    for a in estimate.fold_artifacts:
        named = {"h": a.h, "xi": a.xi, "q": a.q, "h1": a.h1}
        for name, f in named.items():
            if f is not None:
                written.append(save_function(f, directory / f"fold_{a.fold}_{name}.json"))
    logger.info(f"Saved {len(written)} nuisance files to {directory}")
    return written
