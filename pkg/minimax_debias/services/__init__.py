"""Services Package - estimation, oracle and simulation operations."""

from .problem_service import (
    validate_dataset, residual, functional_mean, functional_basis_mean,
    load_problem, load_pl_dataset,
)

from .function_space_service import (
    features, gram, median_bandwidth, evaluate, class_norm_sq,
    Basis, build_basis, dump_function, load_function, save_function, read_function,
)

from .minimax_service import (
    TestOperator, build_test_operator, h_system, estimate_h, xi_system, estimate_xi,
    project_q, estimate_h_clever, minimax_objective,
)

from .debiased_service import (
    psi_values, fold_splits, fit_folds, crossfit_estimate, variance_and_ci,
    tmle_step, estimate_all_methods, save_fold_nuisances,
)

from .partially_linear_service import (
    to_problem, pl_class, pl_estimate_h, pl_estimate_debias, pl_debiased_theta,
    pl_crossfit_estimate, chen_alternative_xi, check_q_moments,
)

from .oracle_service import (
    p_matrix, p_adjoint, riesz_alpha, solve_xi0, q_dagger, theta_star,
    verify_mixed_bias, expected_psi, xi_objective, null_space_p, null_space_p_adjoint,
    neyman_derivative, sample_from, sample_problem as sample_discrete_problem,
    load_discrete_problem, reference_problems, run_identity_suite,
)

from .dgp_service import (
    h0_eval, sample, sample_problem, analytic_theta, oracle_theta, oracle_nuisances,
    tsls, pl_sample, pl_oracle_gamma, pl_oracle_q, run_slope_suite,
)

from .harness_service import aggregate, cell_theta_star, run_grid, run_replication

__all__ = [
    # Problem
    "validate_dataset", "residual", "functional_mean", "functional_basis_mean",
    "load_problem", "load_pl_dataset",
    # Function spaces
    "features", "gram", "median_bandwidth", "evaluate", "class_norm_sq",
    "Basis", "build_basis", "dump_function", "load_function", "save_function", "read_function",
    # Minimax
    "TestOperator", "build_test_operator", "h_system", "estimate_h", "xi_system", "estimate_xi",
    "project_q", "estimate_h_clever", "minimax_objective",
    # Debiased
    "psi_values", "fold_splits", "fit_folds", "crossfit_estimate", "variance_and_ci",
    "tmle_step", "estimate_all_methods", "save_fold_nuisances",
    # Partially linear
    "to_problem", "pl_class", "pl_estimate_h", "pl_estimate_debias", "pl_debiased_theta",
    "pl_crossfit_estimate", "chen_alternative_xi", "check_q_moments",
    # Oracle
    "p_matrix", "p_adjoint", "riesz_alpha", "solve_xi0", "q_dagger", "theta_star",
    "verify_mixed_bias", "expected_psi", "xi_objective", "null_space_p", "null_space_p_adjoint",
    "neyman_derivative", "sample_from", "sample_discrete_problem",
    "load_discrete_problem", "reference_problems", "run_identity_suite",
    # DGP
    "h0_eval", "sample", "sample_problem", "analytic_theta", "oracle_theta", "oracle_nuisances",
    "tsls", "pl_sample", "pl_oracle_gamma", "pl_oracle_q", "run_slope_suite",
    # Harness
    "aggregate", "cell_theta_star", "run_grid", "run_replication",
]
