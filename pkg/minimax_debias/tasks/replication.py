"""
Replication Tasks - one seeded draw of a cell, estimated by every method

Replications are independent given (cell, rep_index), so a cell's reps are
dispatched to the worker pool and collected in rep order.
"""
import hashlib
import logging
from typing import List, Optional

import numpy as np

from ..core.exceptions import EstimationError
from ..core.workers import parallel_map
from ..schemas.estimation import METHODS
from ..schemas.experiment import Cell, ExperimentConfig, ReplicationRecord
from ..services.debiased_service import estimate_all_methods
from ..services.dgp_service import sample_problem

logger = logging.getLogger(__name__)


def cell_hash(cell: Cell, salt: str = "") -> int:
    """Platform-independent 32-bit hash of a cell."""
    digest = hashlib.sha256(f"{cell.key}{salt}".encode("utf-8")).hexdigest()
    return int(digest[:8], 16)


def replication_seed(base_seed: int, cell: Cell, rep_index: int) -> int:
    return base_seed + cell_hash(cell) + rep_index


def run_replication(
    cell: Cell,
    rep_index: int,
    theta_star: float,
    cfg: ExperimentConfig,
) -> List[ReplicationRecord]:
    """
    Draw the cell's data for this replication and estimate with every method.

    A solver failure yields one failed record per method.
    """
    seed = replication_seed(cfg.base_seed, cell, rep_index)
    common = {"h0_kind": cell.h0_kind, "n": cell.n, "rho": cell.rho, "rep": rep_index}
    try:
        problem = sample_problem(cfg.dgp(cell.h0_kind, cell.n, cell.rho, seed))
        estimator = cfg.estimator.model_copy(update={"seed": seed, "alpha": cfg.alpha})
        estimates = estimate_all_methods(problem, estimator)
    except (EstimationError, np.linalg.LinAlgError) as e:
        logger.error(f"Replication {rep_index} of {cell.key} failed: {e}", exc_info=True)
        return [ReplicationRecord(**common, method=m, failed=True, error=str(e)) for m in METHODS]

    return [
        ReplicationRecord(
            **common,
            method=m,
            theta_hat=estimates[m].theta,
            se=estimates[m].se,
            covered=estimates[m].covers(theta_star),
        )
        for m in METHODS
    ]


def run_cell_replications(
    cell: Cell,
    theta_star: float,
    cfg: ExperimentConfig,
    threads: Optional[int] = None,
) -> List[ReplicationRecord]:
    """All replications of one cell, in rep order."""
    batches = parallel_map(lambda rep: run_replication(cell, rep, theta_star, cfg), range(cfg.reps), threads)
    return [record for batch in batches for record in batch]
