"""
DiscreteProblem Model - a known joint distribution on finite S and T supports
"""
from dataclasses import dataclass

import numpy as np


def _frozen(arr, ndim: int) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    if ndim == 2 and out.ndim == 1:
        out = out.reshape(-1, 1)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class DiscreteProblem:
    """
    pmf[s, t] over m_s S-points and m_t T-points, with g1, g2 tabulated on the
    same grid and m(W; h) = sum_s m_weights[s] h(s).
    """
    s_support: np.ndarray
    t_support: np.ndarray
    pmf: np.ndarray
    g1_table: np.ndarray
    g2_table: np.ndarray
    m_weights: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        for field_name, ndim in (
            ("s_support", 2),
            ("t_support", 2),
            ("pmf", 2),
            ("g1_table", 2),
            ("g2_table", 2),
            ("m_weights", 1),
        ):
            object.__setattr__(self, field_name, _frozen(getattr(self, field_name), ndim))

        m_s, m_t = self.pmf.shape
        if self.s_support.shape[0] != m_s or self.t_support.shape[0] != m_t:
            raise ValueError(
                f"Supports have {self.s_support.shape[0]} and {self.t_support.shape[0]} points "
                f"but pmf is {m_s}x{m_t}"
            )
        for table in ("g1_table", "g2_table"):
            if getattr(self, table).shape != (m_s, m_t):
                raise ValueError(f"{table} must be {m_s}x{m_t}, got {getattr(self, table).shape}")
        if self.m_weights.shape != (m_s,):
            raise ValueError(f"m_weights must have {m_s} entries, got {self.m_weights.shape[0]}")
        for name in ("s_support", "t_support", "pmf", "g1_table", "g2_table", "m_weights"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")
        if np.any(self.pmf < 0):
            raise ValueError("pmf has negative entries")
        if abs(float(self.pmf.sum()) - 1.0) > 1e-10:
            raise ValueError(f"pmf sums to {self.pmf.sum():.12f}, not 1")
        if np.any(self.marg_s <= 0) or np.any(self.marg_t <= 0):
            raise ValueError("Every support point needs positive marginal probability")

    @property
    def m_s(self) -> int:
        return self.pmf.shape[0]

    @property
    def m_t(self) -> int:
        return self.pmf.shape[1]

    @property
    def marg_s(self) -> np.ndarray:
        return self.pmf.sum(axis=1)

    @property
    def marg_t(self) -> np.ndarray:
        return self.pmf.sum(axis=0)


@dataclass(frozen=True, eq=False)
class XiSolution:
    """Minimum-norm least-squares solution of P*P xi = alpha."""
    xi0: np.ndarray
    feasible: bool
    residual: float


@dataclass(frozen=True, eq=False)
class ThetaStarResult:
    """theta* from the minimum-norm h0, with the q-dagger identification cross-check."""
    value: float
    h0: np.ndarray
    r0: np.ndarray
    via_q_dagger: float | None
