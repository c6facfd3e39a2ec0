"""
Estimation Schemas - penalties, cross-fitting configuration and estimates
"""
from typing import Any, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .function_class import FunctionClassSpec, GaussianRKHS

Method = Literal["dr", "tmle", "ipw", "direct"]
METHODS: Tuple[str, ...] = ("dr", "tmle", "ipw", "direct")


class PenaltyConfig(BaseModel):
    """
    Regularization for the three penalized problems.

    A penalty left as None is filled by for_sample_size: mu_n = 0.1 n^-0.9 and
    every gamma = 0.01 n^-0.9, with n the size of the sample the solver sees.
    """
    model_config = ConfigDict(frozen=True)

    mu_n: Optional[float] = Field(default=None, ge=0)
    gamma_q: Optional[float] = Field(default=None, ge=0)
    gamma_h: Optional[float] = Field(default=None, ge=0)
    gamma_xi: Optional[float] = Field(default=None, ge=0)
    tilde_gamma_q: Optional[float] = Field(default=None, ge=0)
    jitter_scale: float = Field(default=1e-10, ge=0)

    # Cross-validated tilde_gamma_q for the q projection
    tilde_gamma_grid: Optional[List[float]] = None
    cv_folds: int = Field(default=5, ge=2)

    @model_validator(mode="after")
    def _grid_nonnegative(self):
        if self.tilde_gamma_grid is not None:
            if not self.tilde_gamma_grid:
                raise ValueError("tilde_gamma_grid must be nonempty when given")
            if any(g < 0 for g in self.tilde_gamma_grid):
                raise ValueError("tilde_gamma_grid entries must be nonnegative")
        return self

    def for_sample_size(self, n: int) -> "PenaltyConfig":
        """Fill unset penalties with their sample-size defaults."""
        if n < 1:
            raise ValueError(f"Sample size must be positive, got {n}")
        base = n ** (-0.9)
        defaults = {
            "mu_n": 0.1 * base,
            "gamma_q": 0.01 * base,
            "gamma_h": 0.01 * base,
            "gamma_xi": 0.01 * base,
            "tilde_gamma_q": 0.01 * base,
        }
        update = {k: v for k, v in defaults.items() if getattr(self, k) is None}
        return self.model_copy(update=update)

    @property
    def resolved(self) -> bool:
        return None not in (self.mu_n, self.gamma_q, self.gamma_h, self.gamma_xi, self.tilde_gamma_q)


class CrossfitConfig(BaseModel):
    """How the nuisances are fit and where the influence function is averaged."""
    model_config = ConfigDict(frozen=True)

    k_folds: int = Field(default=5, ge=2)
    split_mode: Literal["crossfit", "simple_split"] = "crossfit"
    seed: int = 0
    alpha: float = Field(default=0.05, gt=0, lt=1)
    penalties: PenaltyConfig = Field(default_factory=PenaltyConfig)

    h_class: FunctionClassSpec = Field(default_factory=GaussianRKHS)
    xi_class: FunctionClassSpec = Field(default_factory=GaussianRKHS)
    q_class: FunctionClassSpec = Field(default_factory=GaussianRKHS)
    q_tilde_class: FunctionClassSpec = Field(default_factory=GaussianRKHS)

    clever_instrument: bool = False

    @property
    def n_splits(self) -> int:
        """Folds whose rows are evaluated (one for a simple split)."""
        return 1 if self.split_mode == "simple_split" else self.k_folds


class ThetaEstimate(BaseModel):
    """A point estimate of the functional with its Wald interval."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    method: Literal["dr", "tmle", "ipw", "direct"]
    theta: float
    se: Optional[float] = Field(default=None, ge=0)
    ci: Optional[Tuple[float, float]] = None
    alpha: float = 0.05
    n: int
    k_folds: int
    seed: int
    fold_thetas: List[float] = Field(default_factory=list)
    fold_artifacts: List[Any] = Field(default_factory=list, exclude=True)

    @model_validator(mode="after")
    def _ci_matches_se(self):
        if (self.se is None) != (self.ci is None):
            raise ValueError("A confidence interval is reported exactly when a standard error is")
        if self.ci is not None and self.ci[0] > self.ci[1]:
            raise ValueError(f"Confidence interval bounds are reversed: {self.ci}")
        return self

    def covers(self, value: float) -> Optional[bool]:
        if self.ci is None:
            return None
        return self.ci[0] <= value <= self.ci[1]


class PLEstimate(BaseModel):
    """Debiased coefficients of the linear block of a partially linear model."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    theta: List[float]
    se: List[float]
    ci: List[Tuple[float, float]]
    theta_tilde: List[float]
    alpha: float = 0.05
    n: int
    k_folds: int = 1
    seed: int = 0
    g_hat: Any = Field(default=None, exclude=True)
    q_hat: List[Any] = Field(default_factory=list, exclude=True)
    xi_hat: List[Any] = Field(default_factory=list, exclude=True)

    @model_validator(mode="after")
    def _consistent_dimension(self):
        d_a = len(self.theta)
        if not (len(self.se) == len(self.ci) == len(self.theta_tilde) == d_a):
            raise ValueError("theta, se, ci and theta_tilde must all have length d_a")
        for label, items in (("q_hat", self.q_hat), ("xi_hat", self.xi_hat)):
            if items and len(items) != d_a:
                raise ValueError(f"{label} must hold one function per linear coordinate")
        return self

    @property
    def d_a(self) -> int:
        return len(self.theta)


class QMomentDiagnostics(BaseModel):
    """How far fitted instruments are from E[q|X_b] = 0 and E[q X_a^T] = I."""
    zero_given_xb: float = Field(ge=0)
    identity_gap: float = Field(ge=0)
