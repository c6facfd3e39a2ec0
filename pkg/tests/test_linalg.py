"""
Tests for the jittered symmetric solves and the worker pool.
"""
import numpy as np
import pytest

from minimax_debias.core.exceptions import SingularSystemError
from minimax_debias.core.linalg import add_jitter, factor_psd, jitter_amount, solve_bordered, solve_psd, symmetrize
from minimax_debias.core.workers import parallel_map, resolve_threads


class TestJitter:
    def test_symmetrize(self):
        a = np.array([[1.0, 2.0], [0.0, 3.0]])
        np.testing.assert_array_equal(symmetrize(a), [[1.0, 1.0], [1.0, 3.0]])

    def test_amount_scales_with_mean_diagonal(self):
        a = np.diag([2.0, 4.0])
        assert jitter_amount(a, 1e-10) == pytest.approx(3e-10)

    def test_nonpositive_trace_falls_back_to_dimension(self):
        assert jitter_amount(np.zeros((4, 4)), 1e-6) == pytest.approx(1e-6)

    def test_add_jitter_does_not_touch_input(self):
        a = np.eye(3)
        out = add_jitter(a, 0.5)
        np.testing.assert_array_equal(a, np.eye(3))
        np.testing.assert_allclose(np.diag(out), 1.5)


class TestSolves:
    def test_solve_psd_matches_direct_solve(self, rng):
        x = rng.normal(size=(30, 5))
        a = x.T @ x
        b = rng.normal(size=5)
        np.testing.assert_allclose(solve_psd(a, b, 0.0), np.linalg.solve(a, b), rtol=1e-8)

    def test_solve_psd_accepts_matrix_rhs(self, rng):
        x = rng.normal(size=(20, 3))
        b = rng.normal(size=(3, 4))
        assert solve_psd(x.T @ x, b).shape == (3, 4)

    def test_factor_rejects_indefinite(self):
        with pytest.raises(SingularSystemError):
            factor_psd(np.array([[1.0, 0.0], [0.0, -5.0]]))

    def test_bordered_meets_constraint(self, rng):
        x = rng.normal(size=(40, 4))
        a = x.T @ x
        rhs = rng.normal(size=4)
        constraint = rng.normal(size=4)
        c, _ = solve_bordered(a, rhs, constraint, 2.5, 0.0)
        assert constraint @ c == pytest.approx(2.5, abs=1e-10)

    def test_bordered_identity_case(self):
        c, multiplier = solve_bordered(np.eye(2), np.zeros(2), np.array([1.0, 1.0]), 2.0, 0.0)
        np.testing.assert_allclose(c, [1.0, 1.0])
        assert multiplier == pytest.approx(1.0)

    def test_bordered_rejects_zero_constraint(self):
        with pytest.raises(SingularSystemError):
            solve_bordered(np.eye(2), np.ones(2), np.zeros(2), 1.0)


class TestWorkers:
    def test_resolve_threads_rejects_zero(self):
        with pytest.raises(ValueError):
            resolve_threads(0)

    def test_resolve_threads_passes_flag_through(self):
        assert resolve_threads(3) == 3

    @pytest.mark.parametrize("threads", [1, 2])
    def test_parallel_map_keeps_order(self, threads):
        assert parallel_map(abs, [-3, 1, -2, 5], threads) == [3, 1, 2, 5]
