"""
Problem Service - the conditional moment problem and its target functional

E[g1(W) h(S) | T] = E[g2(W) | T], target theta = E[m(W; h)].
"""
import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from ..models.dataset import Dataset, MomentProblem, PLDataset
from ..models.function import FittedFunction
from ..schemas.dataset import DatasetRoles, PLRoles, Violation
from ..schemas.functional import LinearFunctionalSpec

logger = logging.getLogger(__name__)


def validate_dataset(d: Dataset) -> List[Violation]:
    """Report every Dataset invariant violation; an empty list means valid."""
    violations: List[Violation] = []

    for name in ("s", "t"):
        block = getattr(d, name)
        if block.ndim != 2:
            violations.append(Violation(field=name, kind="bad shape", message=f"{name} must be a matrix"))
        elif block.shape[1] < 1:
            violations.append(Violation(field=name, kind="empty block", message=f"{name} has no columns"))
    for name in ("g1", "g2"):
        if getattr(d, name).ndim != 1:
            violations.append(Violation(field=name, kind="bad shape", message=f"{name} must be a vector"))

    n = d.s.shape[0]
    if n < 2:
        violations.append(
            Violation(field="s", kind="too few observations", message=f"need n >= 2, got {n}")
        )

    blocks = {"t": d.t, "g1": d.g1, "g2": d.g2}
    blocks.update({f"aux.{k}": v for k, v in d.aux.items()})
    for name, block in blocks.items():
        if block.shape[0] != n:
            violations.append(
                Violation(
                    field=name,
                    kind="length mismatch",
                    message=f"{name} has {block.shape[0]} rows but n={n}",
                )
            )

    blocks["s"] = d.s
    for name, block in blocks.items():
        bad = int(np.size(block) - np.count_nonzero(np.isfinite(block)))
        if bad:
            violations.append(
                Violation(field=name, kind="non-finite entry", message=f"{name} has {bad} non-finite entries")
            )

    return violations


def residual(h: FittedFunction, d: Dataset) -> np.ndarray:
    """Per-observation moment slack g2_i - g1_i h(S_i)."""
    return d.g2 - d.g1 * h.evaluate(d.s)


def functional_mean(
    m: LinearFunctionalSpec,
    h: FittedFunction,
    d: Dataset,
    rows: Optional[Sequence[int]] = None,
) -> float:
    """Empirical E_n[m(W; h)]."""
    return float(np.mean(m.evaluate(h.evaluate, d, rows)))


def functional_basis_mean(m: LinearFunctionalSpec, basis, d: Dataset) -> np.ndarray:
    """
    The vector E_n[m(W; basis_j)] for a stacked basis handle.

    basis maps an input matrix to an (r x p) design; linearity of m gives the
    functional of any coefficient combination from this vector.
    """
    values = m.evaluate(basis, d)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    return values.mean(axis=0)


# =============================================================================
# CSV LOADERS
# =============================================================================

def _columns(frame: pd.DataFrame, names: Sequence[str], path: Path) -> np.ndarray:
    missing = [c for c in names if c not in frame.columns]
    if missing:
        raise ValueError(f"{path} is missing columns {missing}")
    return frame[list(names)].to_numpy(dtype=float)


def load_problem(csv_path: str | Path, roles_path: str | Path) -> MomentProblem:
    """Load a moment problem from a CSV with a header and a JSON role sidecar."""
    csv_path, roles_path = Path(csv_path), Path(roles_path)
    roles = DatasetRoles.model_validate(json.loads(roles_path.read_text(encoding="utf-8")))
    frame = pd.read_csv(csv_path)

    s = _columns(frame, roles.s, csv_path)
    t = _columns(frame, roles.t, csv_path)
    g2 = _columns(frame, [roles.g2], csv_path)[:, 0]
    g1 = np.ones_like(g2) if roles.g1 is None else _columns(frame, [roles.g1], csv_path)[:, 0]
    aux = {name: _columns(frame, [name], csv_path)[:, 0] for name in roles.aux}

    problem = MomentProblem(dataset=Dataset(s=s, t=t, g1=g1, g2=g2, aux=aux), functional=roles.functional)
    logger.info(f"Loaded {problem.n} observations from {csv_path} (d_s={s.shape[1]}, d_t={t.shape[1]})")
    return problem


def load_pl_dataset(csv_path: str | Path, roles_path: str | Path) -> PLDataset:
    """Load a partially linear dataset from a CSV with an a/b/z/y role sidecar."""
    csv_path, roles_path = Path(csv_path), Path(roles_path)
    roles = PLRoles.model_validate(json.loads(roles_path.read_text(encoding="utf-8")))
    frame = pd.read_csv(csv_path)
    data = PLDataset(
        x_a=_columns(frame, roles.a, csv_path),
        x_b=_columns(frame, roles.b, csv_path),
        z=_columns(frame, roles.z, csv_path),
        y=_columns(frame, [roles.y], csv_path)[:, 0],
    )
    logger.info(f"Loaded partially linear data: n={data.n}, d_a={data.d_a}")
    return data
