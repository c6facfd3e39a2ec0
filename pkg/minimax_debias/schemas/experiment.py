"""
Experiment Schemas - simulation design, oracle values, replication records and metrics
"""
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .estimation import CrossfitConfig

H0Kind = Literal["abs", "twodpoly", "sigmoid", "sin", "linear"]

# Labels used in result tables for the same forms
H0_ALIASES = {"2dpoly": "twodpoly"}


def _canonical_kind(value):
    if isinstance(value, str):
        return H0_ALIASES.get(value, value)
    return value


class DgpConfig(BaseModel):
    """
    T ~ N(0, sigma_t), U ~ N(0, sigma_u), S = rho T + (1 - rho) U + zeta,
    y = h0(S) + U + nu. Scales are standard deviations.
    """
    model_config = ConfigDict(frozen=True)

    rho: float = Field(gt=0, le=1)
    sigma_t: float = Field(default=2.0, gt=0)
    sigma_u: float = Field(default=2.0, gt=0)
    zeta_sd: float = Field(default=0.1, gt=0)
    nu_sd: float = Field(default=0.1, gt=0)
    h0_kind: H0Kind = "sin"
    eps: float = Field(default=0.1, gt=0)
    n: int = Field(default=2000, ge=2)
    seed: int = 0
    exogenous: bool = False

    @field_validator("h0_kind", mode="before")
    @classmethod
    def _canonical_h0(cls, value):
        return _canonical_kind(value)

    @property
    def var_s(self) -> float:
        return self.rho**2 * self.sigma_t**2 + (1 - self.rho) ** 2 * self.sigma_u**2 + self.zeta_sd**2


class OracleNuisances(BaseModel):
    """Slopes of the linear oracle nuisances a0(S), q0(T), xi0(S)."""
    a0_slope: float
    q0_slope: float
    xi0_slope: float
    var_s: float = Field(gt=0)


class OracleTheta(BaseModel):
    """Ground-truth theta* for one design, with where it came from."""
    value: float
    mc_se: Optional[float] = None
    source: Literal["analytic", "monte_carlo"]
    n_mc: Optional[int] = None


class ExperimentGrid(BaseModel):
    h0_kinds: List[H0Kind] = Field(min_length=1)
    ns: List[int] = Field(min_length=1)
    rhos: List[float] = Field(min_length=1)

    @field_validator("h0_kinds", mode="before")
    @classmethod
    def _canonical_kinds(cls, value):
        return [_canonical_kind(v) for v in value] if isinstance(value, list) else value

    @field_validator("ns")
    @classmethod
    def _positive_ns(cls, value):
        if any(n < 4 for n in value):
            raise ValueError("Every sample size must be at least 4")
        return value

    @field_validator("rhos")
    @classmethod
    def _rhos_in_range(cls, value):
        if any(not 0 < r <= 1 for r in value):
            raise ValueError("Every rho must lie in (0, 1]")
        return value


class ExperimentConfig(BaseModel):
    """A Monte Carlo study over (h0_kind, n, rho) cells."""
    grid: ExperimentGrid
    reps: int = Field(default=100, ge=1)
    alpha: float = Field(default=0.05, gt=0, lt=1)
    estimator: CrossfitConfig = Field(default_factory=lambda: CrossfitConfig(split_mode="simple_split"))

    sigma_t: float = Field(default=2.0, gt=0)
    sigma_u: float = Field(default=2.0, gt=0)
    zeta_sd: float = Field(default=0.1, gt=0)
    nu_sd: float = Field(default=0.1, gt=0)
    eps: float = Field(default=0.1, gt=0)

    oracle_mc_n: int = Field(default=2_000_000, ge=1)
    theta_star_source: Literal["auto", "monte_carlo"] = "auto"
    base_seed: int = 0
    output: str = "results/metrics.csv"
    failure_threshold: float = Field(default=0.05, ge=0, le=1)

    def dgp(self, h0_kind: str, n: int, rho: float, seed: int) -> DgpConfig:
        return DgpConfig(
            rho=rho,
            sigma_t=self.sigma_t,
            sigma_u=self.sigma_u,
            zeta_sd=self.zeta_sd,
            nu_sd=self.nu_sd,
            h0_kind=h0_kind,
            eps=self.eps,
            n=n,
            seed=seed,
        )


class Cell(BaseModel):
    """One (h0_kind, n, rho) design point."""
    model_config = ConfigDict(frozen=True)

    h0_kind: H0Kind
    n: int
    rho: float

    @field_validator("h0_kind", mode="before")
    @classmethod
    def _canonical_h0(cls, value):
        return _canonical_kind(value)

    @property
    def key(self) -> str:
        return f"{self.h0_kind}|{self.n}|{self.rho!r}"


class ReplicationRecord(BaseModel):
    """One method's outcome in one replication."""
    h0_kind: str
    n: int
    rho: float
    rep: int
    method: Literal["dr", "tmle", "ipw", "direct"]
    theta_hat: Optional[float] = None
    se: Optional[float] = None
    covered: Optional[bool] = None
    failed: bool = False
    error: Optional[str] = None


class MetricsRow(BaseModel):
    """Coverage, rmse and bias of one method in one cell."""
    h0_kind: str
    n: int
    rho: float
    method: Literal["dr", "tmle", "ipw", "direct"]
    cov: Optional[float] = Field(default=None, ge=0, le=100)
    rmse: float = Field(ge=0)
    bias: float = Field(ge=0)
    reps: int = Field(ge=1)
    theta_star_used: float
    rel_rmse: Optional[float] = None
    rel_bias: Optional[float] = None
    failures: int = Field(default=0, ge=0)
    flagged: bool = False

    @model_validator(mode="after")
    def _rmse_dominates_bias(self):
        if self.rmse < self.bias - 1e-12 * (1.0 + self.bias):
            raise ValueError(f"rmse {self.rmse} is below |bias| {self.bias}")
        return self


class CheckResult(BaseModel):
    """Outcome of one exact or statistical self-check."""
    name: str
    problem: str
    passed: bool
    max_error: float
    tolerance: float
    detail: str = ""
