"""
Tests for the exact finite-support calculations and the identity suite.
"""
import json

import numpy as np
import pytest

from minimax_debias.core.exceptions import IdentificationError
from minimax_debias.models.discrete import DiscreteProblem
from minimax_debias.services.oracle_service import (
    check_problem,
    expected_psi,
    inner_t,
    load_discrete_problem,
    neyman_derivative,
    null_space_p_adjoint,
    p_adjoint,
    p_matrix,
    riesz_alpha,
    run_identity_suite,
    sample_from,
    solve_xi0,
    q_dagger,
    theta_star,
    verify_mixed_bias,
    xi_objective,
)


@pytest.fixture
def wide_problem():
    """Two S-points, three T-points: N(P*) is one-dimensional."""
    s = np.array([-1.0, 1.0])
    pmf = np.array([[0.2, 0.15, 0.15], [0.1, 0.15, 0.25]])
    return DiscreteProblem(
        s_support=s,
        t_support=np.array([-1.0, 0.0, 1.0]),
        pmf=pmf,
        g1_table=np.ones((2, 3)),
        g2_table=np.tile(s[:, None], (1, 3)),
        m_weights=pmf.sum(axis=1) * s,
        name="wide",
    )


@pytest.fixture
def independent_problem():
    """S independent of T: P only sees the mean of h, so alpha(s) = s is out of reach."""
    s = np.array([-1.0, 1.0])
    pmf = np.full((2, 2), 0.25)
    return DiscreteProblem(
        s_support=s,
        t_support=s,
        pmf=pmf,
        g1_table=np.ones((2, 2)),
        g2_table=np.tile(s[:, None], (1, 2)),
        m_weights=pmf.sum(axis=1) * s,
        name="independent",
    )


class TestOperators:
    def test_correlated_conditional_expectation(self, correlated_2x2):
        np.testing.assert_allclose(p_matrix(correlated_2x2), [[0.8, 0.2], [0.2, 0.8]])
        np.testing.assert_allclose(p_adjoint(correlated_2x2), [[0.8, 0.2], [0.2, 0.8]])

    def test_identity_design(self, identity_problem):
        np.testing.assert_allclose(p_matrix(identity_problem), np.eye(3))
        np.testing.assert_allclose(riesz_alpha(identity_problem), [-1.0, 0.0, 1.0])

    def test_independence_gives_constant_rows(self, independent_problem):
        np.testing.assert_allclose(p_matrix(independent_problem), np.full((2, 2), 0.5))

    def test_rows_are_conditional_distributions(self, rank_deficient):
        # with g1 = 1 every row of P would sum to one; here g1 scales them
        p = p_matrix(rank_deficient)
        assert p.shape == (rank_deficient.m_t, rank_deficient.m_s)
        assert np.all(p > 0)

    def test_adjoint_identity(self, rank_deficient, rng):
        p, p_star = p_matrix(rank_deficient), p_adjoint(rank_deficient)
        for _ in range(10):
            h, q = rng.normal(size=4), rng.normal(size=3)
            lhs = inner_t(rank_deficient, p @ h, q)
            rhs = float(np.sum(rank_deficient.marg_s * h * (p_star @ q)))
            assert lhs == pytest.approx(rhs, abs=1e-12)


class TestXi:
    def test_identity_xi_is_alpha(self, identity_problem):
        xi = solve_xi0(identity_problem)
        assert xi.feasible
        np.testing.assert_allclose(xi.xi0, [-1.0, 0.0, 1.0], atol=1e-12)

    def test_correlated_closed_form(self, correlated_2x2):
        xi = solve_xi0(correlated_2x2)
        assert xi.feasible
        np.testing.assert_allclose(xi.xi0, [-1 / 0.36, 1 / 0.36], rtol=1e-10)

    def test_infeasible_is_reported(self, independent_problem):
        xi = solve_xi0(independent_problem)
        assert not xi.feasible
        assert xi.residual > 1e-8

    def test_xi0_minimizes_objective(self, rank_deficient, rng):
        xi = solve_xi0(rank_deficient)
        best = xi_objective(rank_deficient, xi.xi0)
        for _ in range(20):
            assert xi_objective(rank_deficient, xi.xi0 + rng.normal(size=4)) >= best - 1e-12


class TestQDagger:
    def test_solves_adjoint_equation(self, wide_problem):
        q = q_dagger(wide_problem, solve_xi0(wide_problem))
        np.testing.assert_allclose(p_adjoint(wide_problem) @ q, riesz_alpha(wide_problem), atol=1e-10)

    def test_orthogonal_to_adjoint_null_space(self, wide_problem, rng):
        q = q_dagger(wide_problem, solve_xi0(wide_problem))
        null = null_space_p_adjoint(wide_problem)
        assert null.shape[1] == 1
        assert inner_t(wide_problem, q, null[:, 0]) == pytest.approx(0.0, abs=1e-12)
        base = inner_t(wide_problem, q, q)
        for _ in range(20):
            other = q + null[:, 0] * rng.normal()
            assert inner_t(wide_problem, other, other) >= base - 1e-12

    def test_correlated_value(self, correlated_2x2):
        q = q_dagger(correlated_2x2, solve_xi0(correlated_2x2))
        np.testing.assert_allclose(q, [-1 / 0.6, 1 / 0.6], rtol=1e-10)

    def test_undefined_without_xi0(self, independent_problem):
        with pytest.raises(IdentificationError):
            q_dagger(independent_problem, solve_xi0(independent_problem))


class TestThetaStar:
    def test_identity_value(self, identity_problem):
        result = theta_star(identity_problem)
        assert result.value == pytest.approx(2 / 3, abs=1e-12)
        assert result.via_q_dagger == pytest.approx(2 / 3, abs=1e-10)

    def test_wide_value(self, wide_problem):
        result = theta_star(wide_problem)
        np.testing.assert_allclose(result.h0, [-1.0, 1.0], atol=1e-10)
        assert result.value == pytest.approx(1.0, abs=1e-10)
        assert result.via_q_dagger == pytest.approx(1.0, abs=1e-10)

    def test_cross_check_on_rank_deficient(self, rank_deficient):
        result = theta_star(rank_deficient)
        assert result.via_q_dagger is not None
        assert abs(result.via_q_dagger - result.value) <= 1e-10 * (1 + abs(result.value))

    def test_weakly_identified_has_no_cross_check(self, independent_problem):
        result = theta_star(independent_problem)
        assert result.via_q_dagger is None
        assert result.value == pytest.approx(0.0, abs=1e-12)


class TestRobustness:
    @pytest.mark.parametrize("index", [0, 1, 2])
    def test_mixed_bias_identity(self, index, identity_problem, correlated_2x2, rank_deficient, rng):
        dp = [identity_problem, correlated_2x2, rank_deficient][index]
        for _ in range(50):
            lhs, rhs = verify_mixed_bias(dp, rng.normal(size=dp.m_s), rng.normal(size=dp.m_s))
            assert abs(lhs - rhs) < 1e-10

    def test_correct_nuisance_has_no_bias(self, rank_deficient, rng):
        truth = theta_star(rank_deficient)
        q = q_dagger(rank_deficient, solve_xi0(rank_deficient))
        # either nuisance at its truth makes psi unbiased
        assert expected_psi(rank_deficient, truth.h0, rng.normal(size=3)) == pytest.approx(truth.value, abs=1e-10)
        assert expected_psi(rank_deficient, rng.normal(size=4), q) == pytest.approx(truth.value, abs=1e-10)

    def test_neyman_orthogonality(self, rank_deficient, rng):
        truth = theta_star(rank_deficient)
        q = q_dagger(rank_deficient, solve_xi0(rank_deficient))
        for _ in range(10):
            derivative = neyman_derivative(rank_deficient, truth.h0, q, rng.normal(size=4), rng.normal(size=3))
            assert abs(derivative) < 1e-8

    def test_mixed_bias_needs_identification(self, independent_problem):
        with pytest.raises(IdentificationError):
            verify_mixed_bias(independent_problem, np.zeros(2), np.zeros(2))


class TestSampling:
    def test_cell_frequencies(self, correlated_2x2):
        d = sample_from(correlated_2x2, n=1_000_000, seed=3)
        for i, s in enumerate([-1.0, 1.0]):
            for j, t in enumerate([-1.0, 1.0]):
                freq = np.mean((d.s[:, 0] == s) & (d.t[:, 0] == t))
                assert abs(freq - correlated_2x2.pmf[i, j]) < 0.005

    def test_seed_repeats(self, rank_deficient):
        a = sample_from(rank_deficient, n=500, seed=8)
        b = sample_from(rank_deficient, n=500, seed=8)
        np.testing.assert_array_equal(a.s, b.s)
        np.testing.assert_array_equal(a.g2, b.g2)

    def test_tables_and_representer(self, rank_deficient):
        d = sample_from(rank_deficient, n=200, seed=1)
        si = np.searchsorted(rank_deficient.s_support[:, 0], d.s[:, 0])
        np.testing.assert_allclose(d.aux["alpha"], riesz_alpha(rank_deficient)[si])

    def test_rejects_empty_sample(self, correlated_2x2):
        with pytest.raises(ValueError):
            sample_from(correlated_2x2, n=0, seed=0)


class TestIdentitySuite:
    def test_reference_problems_pass(self):
        results = run_identity_suite()
        assert results
        failed = [(r.problem, r.name, r.max_error) for r in results if not r.passed]
        assert failed == []

    def test_wide_problem_passes(self, wide_problem):
        assert all(r.passed for r in run_identity_suite([wide_problem]))

    def test_infeasible_problem_flagged(self, independent_problem):
        results = check_problem(independent_problem)
        names = [r.name for r in results]
        assert names == ["adjointness", "strong_identification"]
        assert results[0].passed
        assert not results[1].passed


class TestLoading:
    def test_defaults(self, tmp_path):
        path = tmp_path / "coin.json"
        path.write_text(
            json.dumps(
                {
                    "s_support": [0.0, 1.0],
                    "t_support": [0.0, 1.0],
                    "pmf": [[0.4, 0.1], [0.1, 0.4]],
                    "g2_table": [[0.0, 0.0], [1.0, 1.0]],
                }
            )
        )
        dp = load_discrete_problem(path)
        assert dp.name == "coin"
        np.testing.assert_allclose(dp.g1_table, np.ones((2, 2)))
        np.testing.assert_allclose(dp.m_weights, [0.5, 0.5])

    def test_missing_keys(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text(json.dumps({"s_support": [0.0], "t_support": [0.0], "pmf": [[1.0]]}))
        with pytest.raises(ValueError, match="g2_table"):
            load_discrete_problem(path)

    def test_pmf_must_sum_to_one(self):
        with pytest.raises(ValueError):
            DiscreteProblem(
                s_support=[0.0, 1.0],
                t_support=[0.0],
                pmf=[[0.5], [0.6]],
                g1_table=[[1.0], [1.0]],
                g2_table=[[0.0], [1.0]],
                m_weights=[0.5, 0.5],
            )

    def test_table_shapes(self):
        with pytest.raises(ValueError):
            DiscreteProblem(
                s_support=[0.0, 1.0],
                t_support=[0.0],
                pmf=[[0.5], [0.5]],
                g1_table=[[1.0, 1.0]],
                g2_table=[[0.0], [1.0]],
                m_weights=[0.5, 0.5],
            )
