"""
Per-fold nuisance artifacts produced by cross-fitting.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .function import FittedFunction


@dataclass(frozen=True, eq=False)
class FoldArtifacts:
    """Nuisances fit on the complement of eval_rows, plus the targeted update."""
    fold: int
    train_rows: np.ndarray
    eval_rows: np.ndarray
    h: FittedFunction
    xi: FittedFunction
    q: FittedFunction
    epsilon: Optional[float] = None
    h1: Optional[FittedFunction] = None

    @property
    def n_eval(self) -> int:
        return int(self.eval_rows.shape[0])
