"""
Tests for the closed-form minimax solvers: test operator, h, xi, q projection
and the clever-instrument constraint.
"""
import numpy as np
import pytest

from minimax_debias.core.exceptions import IdentificationError
from minimax_debias.models.dataset import Dataset, MomentProblem
from minimax_debias.models.function import FeatureFunction
from minimax_debias.schemas.estimation import PenaltyConfig
from minimax_debias.schemas.function_class import GaussianRKHS, LinearSieve
from minimax_debias.schemas.experiment import DgpConfig
from minimax_debias.schemas.functional import AuxWeighted, MeanFunctional
from minimax_debias.services import minimax_service
from minimax_debias.services.debiased_service import tmle_step
from minimax_debias.services.dgp_service import oracle_nuisances, tsls
from minimax_debias.services.minimax_service import (
    build_test_operator,
    estimate_h,
    estimate_h_clever,
    estimate_xi,
    h_system,
    minimax_objective,
    project_q,
    xi_system,
)


def _inner_objective(op, u, q, t):
    """E_n[u q] - 1/2 E_n[q^2] - gamma_q ||q||^2 at a candidate test function."""
    values = q.evaluate(t)
    return float(np.mean(u * values) - 0.5 * np.mean(values**2) - op.gamma_q * q.class_norm_sq())


class TestTestOperator:
    def test_one_point_rkhs(self):
        op = build_test_operator(GaussianRKHS(bandwidth=1.0), np.array([[0.0]]), 0.5, jitter_scale=0.0)
        np.testing.assert_allclose(op.maximizer_coefficients(np.array([2.0])), [1.0])
        assert op.value(np.array([2.0])) == pytest.approx(1.0)

    def test_zero_residual(self, rng):
        op = build_test_operator(GaussianRKHS(), rng.normal(size=(12, 1)), 1e-3)
        assert op.value(np.zeros(12)) == 0.0
        np.testing.assert_array_equal(op.maximizer_coefficients(np.zeros(12)), np.zeros(12))

    @pytest.mark.parametrize("q_class", [GaussianRKHS(), LinearSieve(degree=3)])
    def test_value_bounds_and_spectrum(self, q_class, rng):
        n = 25
        op = build_test_operator(q_class, rng.normal(size=(n, 1)), 1e-2)
        omega = op.matrix
        np.testing.assert_allclose(omega, omega.T, atol=1e-12)
        eigenvalues = np.linalg.eigvalsh(omega)
        assert eigenvalues.min() >= -1e-10
        assert eigenvalues.max() < 1.0
        for _ in range(5):
            u = rng.normal(size=n)
            assert 0.0 <= op.value(u) <= u @ u / (2 * n)

    @pytest.mark.parametrize("q_class", [GaussianRKHS(), LinearSieve(degree=2)])
    def test_value_is_attained_by_maximizer(self, q_class, rng):
        t = rng.normal(size=(30, 1))
        op = build_test_operator(q_class, t, 5e-3)
        u = rng.normal(size=30)
        q = op.maximizer(u)
        assert _inner_objective(op, u, q, t) == pytest.approx(op.value(u), rel=1e-6)

    def test_maximizer_beats_perturbations(self, rng):
        t = rng.normal(size=(30, 1))
        op = build_test_operator(LinearSieve(degree=2), t, 5e-3)
        u = rng.normal(size=30)
        best = op.maximizer(u)
        for _ in range(10):
            other = FeatureFunction(weights=best.weights + 0.1 * rng.normal(size=3), spec=best.spec, input_dim=1)
            assert _inner_objective(op, u, other, t) <= op.value(u) + 1e-12

    def test_sieve_matches_explicit_formula(self, rng):
        t = rng.normal(size=(15, 1))
        gamma = 0.02
        op = build_test_operator(LinearSieve(degree=2), t, gamma, jitter_scale=0.0)
        psi = np.hstack([np.ones((15, 1)), t, t**2])
        explicit = psi @ np.linalg.solve(psi.T @ psi + 2 * 15 * gamma * np.eye(3), psi.T)
        np.testing.assert_allclose(op.matrix, explicit, atol=1e-10)

    def test_negative_gamma_rejected(self):
        with pytest.raises(ValueError):
            build_test_operator(LinearSieve(), np.zeros((3, 1)), -1.0)


class TestEstimateH:
    def test_zero_outcome_gives_zero(self, rng, fixed_penalties):
        n = 40
        d = Dataset(s=rng.normal(size=n), t=rng.normal(size=n), g1=np.ones(n), g2=np.zeros(n))
        h = estimate_h(MomentProblem(dataset=d, functional=MeanFunctional()), GaussianRKHS(), GaussianRKHS(), fixed_penalties)
        np.testing.assert_allclose(h.evaluate(d.s), 0.0, atol=1e-12)

    def test_first_order_condition(self, dgp_problem, fixed_penalties, cubic):
        p = dgp_problem(n=300)
        a, rhs, _, _ = h_system(p, cubic, GaussianRKHS(), fixed_penalties)
        h = estimate_h(p, cubic, GaussianRKHS(), fixed_penalties)
        residual = np.linalg.norm(a @ h.weights - rhs)
        assert residual <= 1e-6 * np.linalg.norm(rhs) + 1e-12

    def test_well_specified_model_zeroes_projected_residual(self, rng):
        n = 200
        t = rng.normal(size=n)
        s = 0.8 * t + 0.3 * rng.normal(size=n)
        h_star = 0.5 - s + 0.25 * s**2
        d = Dataset(s=s, t=t, g1=np.ones(n), g2=h_star)
        pen = PenaltyConfig(mu_n=0.0, gamma_q=1e-3, gamma_h=0.0, gamma_xi=0.0, tilde_gamma_q=0.0)
        p = MomentProblem(dataset=d, functional=MeanFunctional())
        h = estimate_h(p, LinearSieve(degree=2), LinearSieve(degree=3), pen)
        op = build_test_operator(LinearSieve(degree=3), d.t, pen.gamma_q)
        assert op.value(h.evaluate(d.s) - d.g2) < 1e-8

    def test_linear_classes_reproduce_two_stage_least_squares(self, dgp_problem, linear):
        p = dgp_problem(n=2000, rho=0.5)
        pen = PenaltyConfig().for_sample_size(p.n)
        h = estimate_h(p, linear, linear, pen)
        assert h.weights[0] == pytest.approx(tsls(p.dataset), abs=10 * pen.mu_n * (1 + abs(tsls(p.dataset))) + 2e-3)

    def test_objective_descent(self, dgp_problem, cubic, rng):
        p = dgp_problem(n=400)
        pen = PenaltyConfig().for_sample_size(p.n)
        h = estimate_h(p, cubic, cubic, pen)
        best = minimax_objective(p, h, cubic, pen)
        assert best <= minimax_objective(p, h.scaled(0.0), cubic, pen) + 1e-12
        for _ in range(20):
            other = FeatureFunction(weights=h.weights + rng.normal(scale=0.2, size=4), spec=cubic, input_dim=1)
            assert best <= minimax_objective(p, other, cubic, pen) + 1e-12

    def test_l2_penalty_shrinks_fit_when_instrument_is_noise(self, rng):
        n = 300
        s = rng.normal(size=n)
        d = Dataset(s=s, t=rng.normal(size=n), g1=np.ones(n), g2=np.sin(s) + rng.normal(size=n))
        p = MomentProblem(dataset=d, functional=MeanFunctional())
        norms = []
        for mu in (1e-3, 1e-2, 1e-1):
            pen = PenaltyConfig(mu_n=mu, gamma_q=1e-3, gamma_h=1e-4, gamma_xi=1e-4, tilde_gamma_q=1e-4)
            h = estimate_h(p, LinearSieve(degree=3), LinearSieve(degree=3), pen)
            norms.append(float(np.sqrt(np.mean(h.evaluate(s) ** 2))))
        assert norms[0] >= norms[1] >= norms[2]


class TestEstimateXi:
    def test_zero_functional_gives_zero(self, rng, fixed_penalties):
        n = 30
        d = Dataset(
            s=rng.normal(size=n), t=rng.normal(size=n), g1=np.ones(n), g2=rng.normal(size=n), aux={"w": np.zeros(n)}
        )
        p = MomentProblem(dataset=d, functional=AuxWeighted(column="w"))
        xi = estimate_xi(p, LinearSieve(degree=2), LinearSieve(degree=2), fixed_penalties)
        np.testing.assert_allclose(xi.weights, 0.0, atol=1e-14)

    def test_first_order_condition(self, dgp_problem, fixed_penalties, cubic):
        p = dgp_problem(n=300)
        a, rhs, _, _ = xi_system(p, cubic, cubic, fixed_penalties)
        xi = estimate_xi(p, cubic, cubic, fixed_penalties)
        assert np.linalg.norm(a @ xi.weights - rhs) <= 1e-6 * np.linalg.norm(rhs) + 1e-12

    def test_exogenous_case_recovers_riesz_representer(self, dgp_problem, linear):
        p = dgp_problem(n=2000, rho=0.5, exogenous=True)
        xi = estimate_xi(p, linear, linear, PenaltyConfig())
        oracle = oracle_nuisances(DgpConfig(rho=0.5))
        assert oracle.a0_slope == pytest.approx(1 / 2.01)
        assert xi.weights[0] == pytest.approx(oracle.a0_slope, abs=0.07)

    def test_endogenous_slope_averaged_over_draws(self, dgp_problem, linear):
        slopes = [estimate_xi(dgp_problem(n=2000, rho=0.5, seed=seed), linear, linear, PenaltyConfig()).weights[0] for seed in range(5)]
        assert np.mean(slopes) == pytest.approx(1.0, abs=0.15)


class TestProjectQ:
    def test_zero_target(self, dgp_problem, linear):
        p = dgp_problem(n=100)
        zero = FeatureFunction(weights=np.zeros(1), spec=linear, input_dim=1)
        for q_class in (linear, GaussianRKHS()):
            q = project_q(p, zero, q_class, 1e-3)
            np.testing.assert_allclose(q.evaluate(p.dataset.t), 0.0, atol=1e-14)

    def test_unpenalized_kernel_ridge_interpolates(self):
        n = 8
        t = np.arange(n, dtype=float)
        s = np.linspace(-1.0, 1.0, n)
        d = Dataset(s=s, t=t, g1=np.ones(n), g2=np.zeros(n))
        xi = FeatureFunction(weights=np.array([0.3, 2.0, -1.0]), spec=LinearSieve(degree=2), input_dim=1)
        q = project_q(MomentProblem(dataset=d, functional=MeanFunctional()), xi, GaussianRKHS(bandwidth=0.3), 0.0)
        np.testing.assert_allclose(q.evaluate(t), xi.evaluate(s), atol=1e-6)

    def test_endogenous_slope(self, dgp_problem, linear):
        p = dgp_problem(n=2000, rho=0.5, seed=5)
        pen = PenaltyConfig().for_sample_size(p.n)
        q = project_q(p, estimate_xi(p, linear, linear, pen), linear, pen.tilde_gamma_q, pen)
        assert q.weights[0] == pytest.approx(0.5, abs=0.1)

    @pytest.mark.parametrize("q_class", [LinearSieve(degree=2), GaussianRKHS()])
    def test_cross_validated_penalty(self, dgp_problem, q_class):
        p = dgp_problem(n=200)
        pen = PenaltyConfig(tilde_gamma_grid=[1e-6, 1e-3, 1e-1], cv_folds=3)
        xi = estimate_xi(p, LinearSieve(degree=1), LinearSieve(degree=2), pen)
        q = project_q(p, xi, q_class, pen=pen)
        assert np.all(np.isfinite(q.evaluate(p.dataset.t)))


class TestCleverInstrument:
    def test_zero_instrument_matches_unconstrained_fit(self, dgp_problem, cubic, fixed_penalties):
        p = dgp_problem(n=300)
        zero = FeatureFunction(weights=np.zeros(4), spec=cubic, input_dim=1)
        plain = estimate_h(p, cubic, cubic, fixed_penalties)
        clever = estimate_h_clever(p, cubic, cubic, fixed_penalties, zero)
        np.testing.assert_array_equal(clever.weights, plain.weights)

    @pytest.mark.parametrize("h_class, tolerance", [(LinearSieve(degree=3), 1e-8), (GaussianRKHS(), 1e-6)])
    def test_constraint_moment_vanishes(self, dgp_problem, h_class, tolerance):
        p = dgp_problem(n=300, seed=2)
        pen = PenaltyConfig().for_sample_size(p.n)
        xi = estimate_xi(p, LinearSieve(degree=1), LinearSieve(degree=3), pen)
        q = project_q(p, xi, LinearSieve(degree=1), pen.tilde_gamma_q, pen)
        h = estimate_h_clever(p, h_class, LinearSieve(degree=3), pen, q)
        d = p.dataset
        moment = np.mean(q.evaluate(d.t) * (d.g2 - d.g1 * h.evaluate(d.s)))
        assert abs(moment) < tolerance * (1 + np.sqrt(np.mean(d.g2**2)))

    def test_targeted_constraint_holds_on_target_rows(self, dgp_problem, cubic):
        p = dgp_problem(n=400, seed=4)
        train, target = p.subset(range(200)), p.subset(range(200, 400))
        pen = PenaltyConfig().for_sample_size(train.n)
        q = FeatureFunction(weights=np.array([0.5]), spec=LinearSieve(degree=1, intercept=False), input_dim=1)
        h = estimate_h_clever(train, cubic, cubic, pen, q, target=target)
        td = target.dataset
        assert abs(np.mean(q.evaluate(td.t) * (td.g2 - h.evaluate(td.s)))) < 1e-8 * (1 + np.sqrt(np.mean(td.g2**2)))

    def test_infeasible_constraint(self):
        n = 40
        t = np.tile([-1.0, 1.0], n // 2)
        d = Dataset(s=np.linspace(-1, 1, n), t=t, g1=np.ones(n), g2=t.copy())
        p = MomentProblem(dataset=d, functional=MeanFunctional())
        q = FeatureFunction(weights=np.array([1.0]), spec=LinearSieve(degree=1, intercept=False), input_dim=1)
        pen = PenaltyConfig().for_sample_size(n)
        # constant h class: the constraint direction mean(q) is zero but mean(q g2) is one
        with pytest.raises(IdentificationError):
            estimate_h_clever(p, LinearSieve(degree=0), LinearSieve(degree=1), pen, q)

    def test_one_dimensional_class_matches_tmle_update(self, dgp_problem, linear):
        p = dgp_problem(n=2000, rho=0.5, seed=8)
        pen = PenaltyConfig().for_sample_size(p.n)
        h = estimate_h(p, linear, linear, pen)
        xi = estimate_xi(p, linear, linear, pen)
        q = project_q(p, xi, linear, pen.tilde_gamma_q, pen)
        clever = estimate_h_clever(p, linear, linear, pen, q)
        _, updated = tmle_step(h, xi, q, p)
        d = p.dataset
        np.testing.assert_allclose(
            clever.evaluate(d.s), updated.evaluate(d.s), atol=1e-8 * (1 + np.sqrt(np.mean(d.g2**2)))
        )

    def test_unmet_constraint_raises(self, dgp_problem, cubic, monkeypatch):
        exact = minimax_service.solve_bordered

        def off_by_a_shift(*args, **kwargs):
            c, multiplier = exact(*args, **kwargs)
            return c + 0.1, multiplier

        monkeypatch.setattr(minimax_service, "solve_bordered", off_by_a_shift)
        p = dgp_problem(n=300, seed=4)
        pen = PenaltyConfig().for_sample_size(p.n)
        q = FeatureFunction(weights=np.array([0.5]), spec=LinearSieve(degree=1, intercept=False), input_dim=1)
        with pytest.raises(IdentificationError, match="did not vanish"):
            estimate_h_clever(p, cubic, cubic, pen, q)
