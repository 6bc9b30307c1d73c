"""Command line interface: `reinvest policy|figures|simulate|verify --config <file>`."""

import argparse
import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ._closedform import ParameterError, check_policy_bounds, solve
from ._config import MODELS, ConfigError, RunConfig, parse_config
from ._models import MarketParams
from ._simengine import (
    ClosedFormOptimal,
    TimeGrid,
    exact_optimal_wealth,
    sample_increments,
    simulate_path,
    trace_frame,
    write_csv,
)
from ._verify import (
    builtin_alternatives,
    dominance_frame,
    dominance_scan,
    martingale_diagnostic,
    martingale_frame,
)

logger = logging.getLogger("reinvest")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CONTRACT = 2

POLICY_POINTS = 1001


def _times(horizon: float) -> np.ndarray:
    return np.linspace(0.0, horizon, POLICY_POINTS)


def cmd_policy(config: RunConfig) -> Path:
    """Write policy.csv: t,pi1,pi2,u_ratio,k,z,f,H_shift on 1001 points over [0, T]."""
    params = config.params
    solution = solve(params)
    check_policy_bounds(params, solution=solution)
    t = _times(params.T)
    pi1, pi2, u_ratio = solution.policy_rates(t)
    frame = pd.DataFrame(
        {
            "t": t,
            "pi1": pi1,
            "pi2": pi2,
            "u_ratio": u_ratio,
            "k": solution.k(t),
            "z": solution.z(t),
            "f": solution.f(t),
            "H_shift": solution.H_shift(t),
        }
    )
    return write_csv(frame, config.out / "policy.csv")


def _bond_proportion(params: MarketParams, p: Optional[float] = None) -> np.ndarray:
    if p is not None:
        params = dataclasses.replace(params, p=p)
    return solve(params).policy_rates(_times(params.T))[0]


def cmd_figures(config: RunConfig) -> List[Path]:
    """Write the bond-proportion curves.

    figure1.csv and figure2.csv hold one column per p of the sweep for Ho-Lee and Vasicek;
    figure3.csv compares both models at the configured p.

    Raises:
        ConfigError: If the configuration lacks b_hat, which the Vasicek curves need; nothing is
            written then.
    """
    params = {model: config.params_for(model) for model in ("holee", "vasicek")}
    t = _times(config.params.T)
    written = []
    for name, model in (("figure1.csv", "holee"), ("figure2.csv", "vasicek")):
        columns: Dict[str, np.ndarray] = {"t": t}
        for p in config.p_sweep:
            columns[f"pi1_p{p:g}"] = _bond_proportion(params[model], p)
        written.append(write_csv(pd.DataFrame(columns), config.out / name))
    comparison = pd.DataFrame(
        {
            "t": t,
            "pi1_holee": _bond_proportion(params["holee"]),
            "pi1_vasicek": _bond_proportion(params["vasicek"]),
        }
    )
    written.append(write_csv(comparison, config.out / "figure3.csv"))
    return written


def cmd_simulate(config: RunConfig) -> Path:
    """Write trace.csv with `n_paths` optimal paths (exact or Euler wealth per `trace_scheme`)."""
    params = config.params
    grid = TimeGrid.from_rate(params.T, config.steps_per_year)
    increments = sample_increments(grid, params.rho, config.seed, config.n_paths)
    if config.trace_scheme == "exact":
        paths = exact_optimal_wealth(params, grid, increments)
    else:
        paths = simulate_path(params, ClosedFormOptimal(params), grid, increments)
    return write_csv(trace_frame(paths), config.out / "trace.csv")


@dataclass(frozen=True)
class VerifyOutcome:
    files: List[Path]
    passed: bool


def cmd_verify(config: RunConfig) -> VerifyOutcome:
    """Run the martingale diagnostic and the dominance scan over `verify_horizon` years.

    Writes martingale.csv and verify.csv. Contract failures are reported in the rows and in
    `VerifyOutcome.passed`, never raised.
    """
    params = dataclasses.replace(config.params, T=config.verify_horizon)
    grid = TimeGrid.from_rate(params.T, config.steps_per_year)
    options = {"batch_size": config.batch_size, "workers": config.workers}
    n_paths, seed = config.verify_paths, config.seed

    checkpoints = [q * params.T for q in (0.0, 0.25, 0.5, 0.75, 1.0)]
    checks = martingale_diagnostic(params, grid, n_paths, seed, checkpoints, **options)
    report = dominance_scan(
        params, grid, n_paths, seed, builtin_alternatives(params, grid), **options
    )
    files = [
        write_csv(martingale_frame(checks), config.out / "martingale.csv"),
        write_csv(dominance_frame(report), config.out / "verify.csv"),
    ]
    passed = report.ok and all(check.within_band for check in checks)
    if passed:
        logger.info("All verification contracts hold")
    else:
        logger.warning("Verification contracts failed, see the reports for details")
    return VerifyOutcome(files, passed)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="configuration file")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--paths", type=int, help="number of paths")
    common.add_argument("--steps-per-year", type=int, help="simulation steps per year")
    common.add_argument("--model", choices=MODELS, help="short-rate model")
    common.add_argument("--verbose", action="store_true", help="log debug messages")

    parser = argparse.ArgumentParser(
        prog="reinvest",
        description="Optimal investment and reinsurance under inflation and stochastic rates",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("policy", parents=[common], help="write the optimal policy table")
    commands.add_parser("figures", parents=[common], help="write the bond-proportion curves")
    commands.add_parser("simulate", parents=[common], help="write optimal wealth traces")
    commands.add_parser("verify", parents=[common], help="run the Monte Carlo verification")
    return parser


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Replace configuration values by the command line flags that were given."""
    changes = {}
    if args.out is not None:
        changes["out"] = args.out
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.steps_per_year is not None:
        changes["steps_per_year"] = args.steps_per_year
    if args.paths is not None:
        changes["verify_paths" if args.command == "verify" else "n_paths"] = args.paths
    config = dataclasses.replace(config, **changes)
    problems = [
        f"--{flag}: must be >= {least}"
        for flag, value, least in (
            ("seed", config.seed, 0),
            ("paths", config.n_paths, 1),
            ("paths", config.verify_paths, 2),
            ("steps-per-year", config.steps_per_year, 1),
        )
        if value < least
    ]
    if problems:
        raise ConfigError(problems)
    if args.model is not None:
        config = config.with_model(args.model)
    return config


def _run(args: argparse.Namespace) -> int:
    config = apply_overrides(parse_config(args.config), args)
    logger.info(f"Running {args.command} with the {config.model} model")
    commands: Dict[str, Callable] = {
        "policy": cmd_policy,
        "figures": cmd_figures,
        "simulate": cmd_simulate,
        "verify": cmd_verify,
    }
    result = commands[args.command](config)
    if isinstance(result, VerifyOutcome) and not result.passed:
        return EXIT_CONTRACT
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the `reinvest` command. Returns the exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _run(args)
    except (ConfigError, ParameterError) as e:
        for message in getattr(e, "errors", [str(e)]):
            logger.error(message)
        return EXIT_CONFIG

