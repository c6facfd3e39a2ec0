"""
minimax-debias command line

Subcommands:
  simulate      run a Monte Carlo grid from an experiment config
  estimate      debiased estimate on one CSV dataset
  estimate-pl   debiased partially linear coefficients on one CSV dataset
  oracle-check  exact identity suite and oracle slope suite
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from . import __version__
from .core.config import settings
from .core.workers import resolve_threads
from .schemas.estimation import CrossfitConfig
from .schemas.experiment import ExperimentConfig

logger = logging.getLogger("minimax_debias")


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, settings.MINIMAX_LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def _crossfit_config(args) -> CrossfitConfig:
    cfg = CrossfitConfig()
    if args.config:
        cfg = CrossfitConfig.model_validate_json(Path(args.config).read_text(encoding="utf-8"))
    update = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.split:
        update["split_mode"] = "simple_split" if args.split == "simple" else "crossfit"
    if getattr(args, "clever", False):
        update["clever_instrument"] = True
    return cfg.model_copy(update=update) if update else cfg


def _write_json(payload, out: Optional[str]) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n", encoding="utf-8")
        logger.info(f"Wrote {path}")
    else:
        print(text)


# =============================================================================
# COMMANDS
# =============================================================================

def cmd_simulate(args) -> int:
    from .services.harness_service import run_grid

    cfg = ExperimentConfig.model_validate_json(Path(args.config).read_text(encoding="utf-8"))
    estimator_update = {}
    if args.split:
        estimator_update["split_mode"] = "simple_split" if args.split == "simple" else "crossfit"
    if args.clever:
        estimator_update["clever_instrument"] = True
    update = {}
    if estimator_update:
        update["estimator"] = cfg.estimator.model_copy(update=estimator_update)
    if args.seed is not None:
        update["base_seed"] = args.seed
    if update:
        cfg = cfg.model_copy(update=update)

    result = run_grid(cfg, out=args.out, threads=resolve_threads(args.threads))
    flagged = sum(r.flagged for r in result["rows"])
    logger.info(f"Simulation finished: {len(result['rows'])} rows, {flagged} flagged")
    return 0


def cmd_estimate(args) -> int:
    from .services.debiased_service import crossfit_estimate, estimate_all_methods, save_fold_nuisances
    from .services.problem_service import load_problem

    problem = load_problem(args.data, args.roles)
    cfg = _crossfit_config(args)
    threads = resolve_threads(args.threads)

    if args.all_methods:
        estimates = estimate_all_methods(problem, cfg, threads)
        payload = {m: e.model_dump(mode="json") for m, e in estimates.items()}
        primary = estimates["dr"]
    else:
        primary = crossfit_estimate(problem, cfg, threads)
        payload = primary.model_dump(mode="json")

    if args.save_nuisances:
        save_fold_nuisances(primary, args.save_nuisances)
    _write_json(payload, args.out)
    return 0


def cmd_estimate_pl(args) -> int:
    from .services.partially_linear_service import pl_crossfit_estimate
    from .services.problem_service import load_pl_dataset

    data = load_pl_dataset(args.data, args.roles)
    estimate = pl_crossfit_estimate(data, _crossfit_config(args))
    _write_json(estimate.model_dump(mode="json"), args.out)
    return 0


def cmd_oracle_check(args) -> int:
    from .services.dgp_service import run_slope_suite
    from .services.oracle_service import load_discrete_problem, reference_problems, run_identity_suite

    problems = reference_problems() + [load_discrete_problem(p) for p in args.problem or []]
    results = run_identity_suite(problems, seed=args.seed or 0)
    if not args.skip_slopes:
        results += run_slope_suite()

    _write_json([r.model_dump() for r in results], args.out)
    failures = [r for r in results if not r.passed]
    for r in failures:
        logger.error(f"{r.problem}: {r.name} failed (error {r.max_error:.3e} >= {r.tolerance:.1e}) {r.detail}")
    return 1 if failures else 0


# =============================================================================
# PARSER
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minimax-debias",
        description="Penalized minimax nuisances and debiased inference for conditional moment models.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required: bool = False):
        p.add_argument("--config", required=config_required, help="JSON config file")
        p.add_argument("--out", help="output path (stdout when omitted for JSON results)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--threads", type=int, help="worker count (default: MINIMAX_THREADS)")
        p.add_argument("--split", choices=["simple", "crossfit"], help="sample-splitting mode")

    simulate = sub.add_parser("simulate", help="run a Monte Carlo grid")
    common(simulate, config_required=True)
    simulate.add_argument("--clever", action="store_true", help="use the clever-instrument h fit")
    simulate.set_defaults(func=cmd_simulate)

    estimate = sub.add_parser("estimate", help="debiased estimate on a CSV dataset")
    common(estimate)
    estimate.add_argument("--data", required=True, help="CSV with a header row")
    estimate.add_argument("--roles", required=True, help="JSON sidecar naming the s, t, g1, g2, aux columns")
    estimate.add_argument("--clever", action="store_true", help="use the clever-instrument h fit")
    estimate.add_argument("--all-methods", action="store_true", help="report dr, tmle, ipw and direct")
    estimate.add_argument("--save-nuisances", metavar="DIR", help="write per-fold nuisances as JSON")
    estimate.set_defaults(func=cmd_estimate)

    estimate_pl = sub.add_parser("estimate-pl", help="partially linear coefficients on a CSV dataset")
    common(estimate_pl)
    estimate_pl.add_argument("--data", required=True, help="CSV with a header row")
    estimate_pl.add_argument("--roles", required=True, help="JSON sidecar naming the a, b, z, y columns")
    estimate_pl.set_defaults(func=cmd_estimate_pl)

    oracle = sub.add_parser("oracle-check", help="exact identity and oracle slope checks")
    oracle.add_argument("--problem", action="append", help="extra DiscreteProblem JSON (repeatable)")
    oracle.add_argument("--skip-slopes", action="store_true", help="only run the exact identities")
    oracle.add_argument("--out", help="write check results as JSON")
    oracle.add_argument("--seed", type=int, help="seed for the random directions")
    oracle.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return args.func(args)
    except ValueError as e:
        # domain errors and invalid configs
        logger.error(f"{e}")
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"Unexpected failure: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
