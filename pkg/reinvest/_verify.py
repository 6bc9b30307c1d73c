"""Monte Carlo checks that the closed-form value is attained by the optimal policy and bounds the
expected utility of other strategies."""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ._closedform import AncillarySolution, solve
from ._models import DomainError, MarketParams
from ._parallel import Batch, run_batches
from ._simengine import (
    ClosedFormOptimal,
    ConstantMix,
    Strategy,
    Tabulated,
    TimeGrid,
    ensure_admissible,
    exact_optimal_wealth,
    sample_increments,
    simulate_path,
    value_along_path,
)

logger = logging.getLogger("reinvest")

BAND = 3.0
SCHEMES = ("euler", "exact")


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean and standard error of a Monte Carlo functional."""

    mean: float
    std_error: float
    n_paths: int
    seed: int
    absorbed: int = 0

    @classmethod
    def from_samples(cls, samples: np.ndarray, seed: int, absorbed: int = 0) -> "MCEstimate":
        """Estimate from the samples, shifted by the first one so that equal samples give an
        exact mean and a zero standard error."""
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        if n < 2:
            raise ValueError(f"An estimate needs at least 2 samples, but got {n}")
        shifted = samples - samples[0]
        mean_shift = shifted.mean()
        variance = np.sum((shifted - mean_shift) ** 2) / (n - 1)
        return cls(
            mean=float(samples[0] + mean_shift),
            std_error=float(math.sqrt(variance / n)),
            n_paths=n,
            seed=seed,
            absorbed=absorbed,
        )

    def within(self, target: float, band: float = BAND) -> bool:
        """Whether `target` lies within `band` standard errors of the mean.

        A relative slack of 1e-6 absorbs discretisation error of noise-free estimates.
        """
        return abs(self.mean - target) <= band * self.std_error + 1e-6 * (1.0 + abs(target))


def initial_value(params: MarketParams, solution: Optional[AncillarySolution] = None) -> float:
    """G(0, X₀, r₀, I₀)."""
    solution = solution or solve(params)
    return float(solution.value(0.0, params.X0, params.rate.r0, params.inflation.I0))


def _utility(params: MarketParams, wealth: np.ndarray) -> np.ndarray:
    return wealth**params.p / params.p


def mc_expected_utility(
    params: MarketParams,
    strategy: Strategy,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    *,
    scheme: str = "euler",
    batch_size: int = 2048,
    workers: int = 1,
) -> MCEstimate:
    """Estimate E[X_T^p / p] under `strategy`.

    Batch j of `batch_size` paths uses random stream j of `seed`, so the estimate depends on
    (seed, batch_size) but not on `workers`, and strategies evaluated with the same seed share
    their noise. Absorbed paths are scored with the utility of the wealth floor.

    Args:
        params: Market parameters.
        strategy: Strategy to evaluate.
        grid: Simulation grid; the utility is taken at its last node.
        n_paths: Number of paths, at least 2.
        seed: Master seed.
        scheme: "euler" simulates the wealth equation; "exact" uses the exponential form of
            the optimal wealth and requires the closed-form optimal strategy.
        batch_size: Paths per batch.
        workers: Batches run concurrently.

    Raises:
        ValueError: If n_paths < 2 or the scheme is unknown or unsuitable for the strategy.
        InadmissibleStrategy: If the strategy is not admissible.
    """
    if n_paths < 2:
        raise ValueError(f"n_paths must be >= 2, but got {n_paths}")
    if scheme not in SCHEMES:
        raise ValueError(f'Invalid scheme "{scheme}". Must be one of "euler", "exact"')
    if scheme == "exact" and not isinstance(strategy, ClosedFormOptimal):
        raise ValueError("The exact scheme is only available for the closed-form optimal policy")
    ensure_admissible(strategy, params, grid)

    def run(batch: Batch) -> Tuple[np.ndarray, int]:
        increments = sample_increments(grid, params.rho, seed, batch.size, stream=batch.index)
        if scheme == "exact":
            paths = exact_optimal_wealth(params, grid, increments)
        else:
            paths = simulate_path(params, strategy, grid, increments)
        return _utility(params, paths.X[:, -1]), int(paths.absorbed.sum())

    results = run_batches(run, n_paths, batch_size, workers)
    samples = np.concatenate([utilities for utilities, _ in results])
    absorbed = sum(count for _, count in results)
    estimate = MCEstimate.from_samples(samples, seed, absorbed)
    logger.info(
        f"E[U(X_T)] under {strategy.name} ({scheme}): {estimate.mean:.6g} "
        f"+- {estimate.std_error:.3g} from {n_paths} paths"
    )
    return estimate


@dataclass(frozen=True)
class MartingaleCheck:
    """MC mean of G along the optimal wealth paths at one checkpoint, compared with G₀."""

    checkpoint: float
    estimate: MCEstimate
    G0: float

    @property
    def within_band(self) -> bool:
        return self.estimate.within(self.G0)


def martingale_diagnostic(
    params: MarketParams,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    checkpoints: Sequence[float],
    *,
    batch_size: int = 2048,
    workers: int = 1,
) -> List[MartingaleCheck]:
    """Estimate E[G(s, X*_s, r_s, I_s)] at each checkpoint s on the exact optimal wealth paths.

    Under the optimal policy G is a martingale along the paths, so every estimate should lie
    within three standard errors of G(0, X₀, r₀, I₀). Checkpoints are snapped to the nearest
    grid node. Failed checks are logged as warnings.

    Raises:
        DomainError: If a checkpoint lies outside of the grid.
    """
    if n_paths < 2:
        raise ValueError(f"n_paths must be >= 2, but got {n_paths}")
    for s in checkpoints:
        if not grid.t0 <= s <= grid.T:
            raise DomainError(f"checkpoint={s!r} lies outside of [{grid.t0}, {grid.T}]")
    steps = [grid.index_of(s) for s in checkpoints]
    solution = solve(params)
    g0 = initial_value(params, solution)

    def run(batch: Batch) -> np.ndarray:
        increments = sample_increments(grid, params.rho, seed, batch.size, stream=batch.index)
        paths = exact_optimal_wealth(params, grid, increments)
        return value_along_path(params, paths, steps, solution)

    values = np.concatenate(run_batches(run, n_paths, batch_size, workers), axis=0)
    checks = [
        MartingaleCheck(float(grid.nodes[step]), MCEstimate.from_samples(values[:, j], seed), g0)
        for j, step in enumerate(steps)
    ]
    for check in checks:
        if not check.within_band:
            logger.warning(
                f"Martingale check failed at t={check.checkpoint:g}: mean "
                f"{check.estimate.mean:.6g} vs G0={g0:.6g} "
                f"(std error {check.estimate.std_error:.3g})"
            )
    return checks


@dataclass(frozen=True)
class DominanceRow:
    """Expected utility of one strategy against the closed-form value G₀.

    `violates` marks an estimate that breaks the upper bound: for alternatives the one-sided
    mean − 3 std_error > G₀, for the optimal policy a G₀ outside its two-sided band.
    """

    strategy: str
    estimate: MCEstimate
    G0: float
    violates: bool


@dataclass(frozen=True)
class DominanceReport:
    rows: Tuple[DominanceRow, ...]

    @property
    def optimal(self) -> DominanceRow:
        return self.rows[0]

    @property
    def alternatives(self) -> Tuple[DominanceRow, ...]:
        return self.rows[1:]

    @property
    def ok(self) -> bool:
        return not any(row.violates for row in self.rows)


def dominance_scan(
    params: MarketParams,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    alternatives: Sequence[Strategy],
    *,
    batch_size: int = 2048,
    workers: int = 1,
) -> DominanceReport:
    """Compare the expected utility of `alternatives` with G₀ on common random numbers.

    The first row of the report is the closed-form optimal policy.

    Raises:
        InadmissibleStrategy: If any alternative is not admissible; nothing is simulated then.
    """
    for strategy in alternatives:
        ensure_admissible(strategy, params, grid)
    g0 = initial_value(params)
    optimal = ClosedFormOptimal(params)

    rows = []
    for strategy in [optimal, *alternatives]:
        estimate = mc_expected_utility(
            params, strategy, grid, n_paths, seed, batch_size=batch_size, workers=workers
        )
        if strategy is optimal:
            violates = not estimate.within(g0)
        else:
            violates = estimate.mean - BAND * estimate.std_error > g0
        if violates:
            logger.warning(
                f"Dominance check failed for {strategy.name}: {estimate.mean:.6g} "
                f"+- {estimate.std_error:.3g} vs G0={g0:.6g}"
            )
        if estimate.absorbed:
            logger.warning(f"{estimate.absorbed} paths of {strategy.name} hit the wealth floor")
        rows.append(DominanceRow(strategy.name, estimate, g0, violates))
    return DominanceReport(tuple(rows))


def builtin_alternatives(params: MarketParams, grid: TimeGrid) -> List[Strategy]:
    """Frozen-optimal (the optimal controls at t0 held constant), all-cash without insurance
    business, and half the optimal proportions with the optimal retention."""
    optimal = ClosedFormOptimal(params)
    pi1, pi2, u_ratio = (float(v) for v in optimal.rates(grid.t0))
    return [
        ConstantMix(pi1, pi2, u_ratio, name="frozen"),
        ConstantMix(0.0, 0.0, 0.0, name="cash"),
        Tabulated.from_strategy(optimal, grid.nodes, scale=0.5, name="half"),
    ]


def _flags(values: Sequence[bool]) -> List[str]:
    return ["true" if v else "false" for v in values]


def dominance_frame(report: DominanceReport) -> pd.DataFrame:
    """Report table with columns strategy,mean,std_error,n_paths,absorbed,G0,violates."""
    return pd.DataFrame(
        {
            "strategy": [row.strategy for row in report.rows],
            "mean": [row.estimate.mean for row in report.rows],
            "std_error": [row.estimate.std_error for row in report.rows],
            "n_paths": [row.estimate.n_paths for row in report.rows],
            "absorbed": [row.estimate.absorbed for row in report.rows],
            "G0": [row.G0 for row in report.rows],
            "violates": _flags([row.violates for row in report.rows]),
        }
    )


def martingale_frame(checks: Sequence[MartingaleCheck]) -> pd.DataFrame:
    """Table with columns checkpoint,mean,std_error,n_paths,G0,within_band."""
    return pd.DataFrame(
        {
            "checkpoint": [c.checkpoint for c in checks],
            "mean": [c.estimate.mean for c in checks],
            "std_error": [c.estimate.std_error for c in checks],
            "n_paths": [c.estimate.n_paths for c in checks],
            "G0": [c.G0 for c in checks],
            "within_band": _flags([c.within_band for c in checks]),
        }
    )
