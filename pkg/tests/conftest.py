"""
Shared fixtures: small designs and fast (sieve) estimator configurations.
"""
import numpy as np
import pytest

from minimax_debias.models.dataset import Dataset
from minimax_debias.schemas.estimation import CrossfitConfig, PenaltyConfig
from minimax_debias.schemas.experiment import DgpConfig, ExperimentConfig, ExperimentGrid
from minimax_debias.schemas.function_class import LinearSieve
from minimax_debias.services.dgp_service import sample_problem
from minimax_debias.services.oracle_service import reference_problems


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def linear():
    """Slope-only sieve: f(x) = c x."""
    return LinearSieve(degree=1, intercept=False)


@pytest.fixture
def cubic():
    return LinearSieve(degree=3)


@pytest.fixture
def valid_dataset(rng):
    n = 10
    return Dataset(
        s=rng.normal(size=(n, 1)),
        t=rng.normal(size=(n, 2)),
        g1=np.ones(n),
        g2=rng.normal(size=n),
    )


@pytest.fixture
def sieve_crossfit():
    """Simple-split estimator on polynomial classes; cheap enough for unit tests."""
    return CrossfitConfig(
        split_mode="simple_split",
        seed=7,
        h_class=LinearSieve(degree=3),
        xi_class=LinearSieve(degree=1),
        q_class=LinearSieve(degree=3),
        q_tilde_class=LinearSieve(degree=1),
    )


@pytest.fixture
def dgp_problem():
    """Factory for draws of the scalar IV design."""

    def make(kind: str = "sin", n: int = 600, rho: float = 0.5, seed: int = 0, exogenous: bool = False):
        return sample_problem(DgpConfig(h0_kind=kind, n=n, rho=rho, seed=seed, exogenous=exogenous))

    return make


@pytest.fixture
def fixed_penalties():
    return PenaltyConfig(mu_n=1e-4, gamma_q=1e-4, gamma_h=1e-5, gamma_xi=1e-5, tilde_gamma_q=1e-5)


@pytest.fixture
def identity_problem():
    return reference_problems()[0]


@pytest.fixture
def correlated_2x2():
    return reference_problems()[1]


@pytest.fixture
def rank_deficient():
    return reference_problems()[2]


@pytest.fixture
def small_experiment(tmp_path, sieve_crossfit):
    return ExperimentConfig(
        grid=ExperimentGrid(h0_kinds=["abs"], ns=[500], rhos=[0.5]),
        reps=5,
        estimator=sieve_crossfit,
        output=str(tmp_path / "metrics.csv"),
    )
