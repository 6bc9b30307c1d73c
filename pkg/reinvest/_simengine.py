"""Simulation of the wealth, short-rate, inflation and price-index system under a strategy."""

import abc
import functools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_simpson, cumulative_trapezoid

from ._closedform import AncillarySolution, solve
from ._models import MarketParams, bond_vol, eta, rate_drift

logger = logging.getLogger("reinvest")

ABSORPTION_FLOOR = 1e-8

Controls = Tuple[np.ndarray, np.ndarray, np.ndarray]


class InadmissibleStrategy(ValueError):
    """Error raised for controls that are not finite, exceed δ in absolute value or have u < 0."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid with nodes tᵢ = t0 + i (T − t0) / n_steps."""

    t0: float
    T: float
    n_steps: int

    def __post_init__(self):
        if not self.t0 < self.T:
            raise ValueError(f"TimeGrid needs t0 < T, but got t0={self.t0}, T={self.T}")
        if not self.n_steps >= 1:
            raise ValueError(f"n_steps must be >= 1, but got {self.n_steps}")

    @classmethod
    def from_rate(cls, T: float, steps_per_year: int, t0: float = 0.0) -> "TimeGrid":
        """Grid over [t0, T] with `steps_per_year` steps per unit of time (at least one step)."""
        if not steps_per_year >= 1:
            raise ValueError(f"steps_per_year must be >= 1, but got {steps_per_year}")
        return cls(t0, T, max(1, round((T - t0) * steps_per_year)))

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.t0, self.T, self.n_steps + 1)

    def coarsen(self, factor: int) -> "TimeGrid":
        if self.n_steps % factor:
            raise ValueError(f"{self.n_steps} steps cannot be coarsened by a factor of {factor}")
        return TimeGrid(self.t0, self.T, self.n_steps // factor)

    def index_of(self, t: float) -> int:
        """Index of the grid node nearest to `t`."""
        return int(round((t - self.t0) / self.dt))


@dataclass(frozen=True, eq=False)
class BrownianIncrements:
    """Increments of (W₀, W₁, W₂, W₃), each an array of shape (n_paths, n_steps).

    Cov(ΔW₀, ΔW₁) = ρ Δt; W₂ and W₃ are independent of all others.
    """

    grid: TimeGrid
    dW0: np.ndarray
    dW1: np.ndarray
    dW2: np.ndarray
    dW3: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.dW0.shape[0]

    @classmethod
    def zeros(cls, grid: TimeGrid, n_paths: int = 1) -> "BrownianIncrements":
        """Noise-free increments, for deterministic limits."""
        zero = np.zeros((n_paths, grid.n_steps))
        return cls(grid, zero, zero, zero, zero)

    def coarsen(self, factor: int) -> "BrownianIncrements":
        """Sum blocks of `factor` consecutive increments: the same paths on a coarser grid."""
        grid = self.grid.coarsen(factor)

        def block_sum(dw: np.ndarray) -> np.ndarray:
            return dw.reshape(dw.shape[0], grid.n_steps, factor).sum(axis=-1)

        return BrownianIncrements(
            grid, block_sum(self.dW0), block_sum(self.dW1), block_sum(self.dW2), block_sum(self.dW3)
        )


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for the sub-stream `stream` of a master `seed`."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def sample_increments(
    grid: TimeGrid, rho: float, seed: int, n_paths: int, *, stream: int = 0
) -> BrownianIncrements:
    """Draw correlated Brownian increments on `grid`.

    ΔW₁ = √Δt Z₁ and ΔW₀ = √Δt (ρ Z₁ + √(1 − ρ²) Z₀), with independent standard normals. The
    result depends on (seed, stream) only; batch j of a run uses stream j.

    Raises:
        ValueError: If |rho| > 1 or n_paths < 1.

    Examples:
        >>> from reinvest import TimeGrid, sample_increments
        >>> grid = TimeGrid(0.0, 1.0, 4)
        >>> dw = sample_increments(grid, 1.0, seed=7, n_paths=3)
        >>> bool((dw.dW0 == dw.dW1).all())
        True
    """
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [-1, 1], but got {rho}")
    if not n_paths >= 1:
        raise ValueError(f"n_paths must be >= 1, but got {n_paths}")
    z0, z1, z2, z3 = rng_for(seed, stream).standard_normal((4, n_paths, grid.n_steps))
    scale = math.sqrt(grid.dt)
    return BrownianIncrements(
        grid,
        dW0=scale * (rho * z1 + math.sqrt(1.0 - rho * rho) * z0),
        dW1=scale * z1,
        dW2=scale * z2,
        dW3=scale * z3,
    )


class Strategy(abc.ABC):
    """Deterministic proportional strategy: bond and stock proportions π₁(t), π₂(t) and a
    retention u(t, x) = u_ratio(t) x."""

    name: str

    @abc.abstractmethod
    def rates(self, t) -> Controls:
        """(π₁, π₂, u_ratio) at the times `t`, each broadcast to the shape of `t`."""

    def controls(self, t, x) -> Controls:
        """(π₁, π₂, u) at time(s) `t` and wealth `x`."""
        pi1, pi2, u_ratio = self.rates(t)
        return pi1, pi2, u_ratio * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class ClosedFormOptimal(Strategy):
    """The optimal policy of the closed-form solution."""

    params: MarketParams
    name: str = "optimal"

    @property
    def solution(self) -> AncillarySolution:
        return solve(self.params)

    def rates(self, t) -> Controls:
        return self.solution.policy_rates(t)


@dataclass(frozen=True)
class ConstantMix(Strategy):
    """Constant proportions and retention ratio."""

    pi1: float
    pi2: float
    u_ratio: float
    name: str = "constant"

    def rates(self, t) -> Controls:
        shape = np.shape(t)
        return (np.full(shape, self.pi1), np.full(shape, self.pi2), np.full(shape, self.u_ratio))


@dataclass(frozen=True)
class Tabulated(Strategy):
    """Controls interpolated linearly from a table over time."""

    times: Tuple[float, ...]
    pi1: Tuple[float, ...]
    pi2: Tuple[float, ...]
    u_ratio: Tuple[float, ...]
    name: str = "tabulated"

    @classmethod
    def from_strategy(
        cls, strategy: Strategy, times: Sequence[float], *, scale: float = 1.0, name: str = ""
    ) -> "Tabulated":
        """Tabulate `strategy` at `times` with both proportions multiplied by `scale`."""
        times = np.asarray(times, dtype=float)
        pi1, pi2, u_ratio = strategy.rates(times)
        return cls(
            tuple(times.tolist()),
            tuple((scale * pi1).tolist()),
            tuple((scale * pi2).tolist()),
            tuple(np.asarray(u_ratio, dtype=float).tolist()),
            name=name or f"{strategy.name}x{scale:g}",
        )

    def rates(self, t) -> Controls:
        return (
            np.interp(t, self.times, self.pi1),
            np.interp(t, self.times, self.pi2),
            np.interp(t, self.times, self.u_ratio),
        )


@functools.lru_cache(maxsize=16)
def _schedule(strategy: Strategy, grid: TimeGrid) -> Controls:
    """Controls on the left endpoints of every step of `grid`."""
    left = grid.nodes[:-1]
    values = strategy.rates(left)
    return tuple(np.broadcast_to(np.asarray(v, dtype=float), left.shape) for v in values)


def ensure_admissible(strategy: Strategy, params: MarketParams, grid: TimeGrid) -> None:
    """Check the controls of `strategy` on every node of `grid`.

    Raises:
        InadmissibleStrategy: If a control is not finite, |π₁| or |π₂| exceeds δ or u < 0.
    """
    pi1, pi2, u_ratio = _schedule(strategy, grid)
    delta = params.pi_bound_delta
    for label, values in (("pi1", pi1), ("pi2", pi2), ("u_ratio", u_ratio)):
        if not np.isfinite(values).all():
            raise InadmissibleStrategy(f"Strategy {strategy.name}: {label} is not finite")
    for label, values in (("pi1", pi1), ("pi2", pi2)):
        largest = float(np.max(np.abs(values)))
        if largest > delta:
            raise InadmissibleStrategy(
                f"Strategy {strategy.name}: max |{label}| = {largest:.6g} exceeds delta={delta:.6g}"
            )
    if np.min(u_ratio) < 0:
        raise InadmissibleStrategy(f"Strategy {strategy.name}: retention u must be >= 0")


@dataclass(frozen=True)
class PathState:
    """State of one path at one node."""

    t: float
    X: float
    r: float
    I: float  # noqa: E741
    Pi: float


@dataclass(frozen=True, eq=False)
class Paths:
    """Simulated paths; every state array has shape (n_paths, n_steps + 1).

    The control arrays hold the controls applied on each step and have shape
    (n_paths, n_steps). `absorbed` flags paths that hit the wealth floor.
    """

    grid: TimeGrid
    X: np.ndarray
    r: np.ndarray
    I: np.ndarray  # noqa: E741
    Pi: np.ndarray
    pi1: np.ndarray
    pi2: np.ndarray
    u: np.ndarray
    absorbed: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    def state(self, path: int, step: int) -> PathState:
        return PathState(
            float(self.grid.nodes[step]),
            float(self.X[path, step]),
            float(self.r[path, step]),
            float(self.I[path, step]),
            float(self.Pi[path, step]),
        )

    def states(self, path: int) -> List[PathState]:
        return [self.state(path, step) for step in range(self.grid.n_steps + 1)]


def _simulate_factors(
    params: MarketParams, increments: BrownianIncrements
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Euler paths of r and I and the log-Euler path of Π."""
    grid = increments.grid
    left = grid.nodes[:-1]
    dt = grid.dt
    n_paths, n_steps = increments.n_paths, grid.n_steps
    inflation, rate = params.inflation, params.rate

    beta = np.broadcast_to(inflation.beta(left), left.shape)
    alpha = np.broadcast_to(inflation.alpha(left), left.shape)
    s0 = np.broadcast_to(inflation.sigma0(left), left.shape)
    s0_bar = np.broadcast_to(inflation.sigma0_bar(left), left.shape)

    r = np.empty((n_paths, n_steps + 1))
    infl = np.empty((n_paths, n_steps + 1))
    r[:, 0], infl[:, 0] = rate.r0, inflation.I0
    for i in range(n_steps):
        drift = rate_drift(rate, left[i], r[:, i], T1=params.T1)
        r[:, i + 1] = r[:, i] + drift * dt + rate.b * increments.dW1[:, i]
        infl[:, i + 1] = (
            infl[:, i]
            + beta[i] * (alpha[i] - infl[:, i]) * dt
            + s0_bar[i] * increments.dW0[:, i]
        )

    log_growth = (infl[:, :-1] - 0.5 * s0**2) * dt + s0 * increments.dW0
    log_pi = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(log_growth, axis=1)], axis=1)
    price_index = inflation.Pi0 * np.exp(log_pi)
    return r, infl, price_index


def simulate_path(
    params: MarketParams, strategy: Strategy, grid: TimeGrid, increments: BrownianIncrements
) -> Paths:
    """Euler-Maruyama simulation of (X, r, I) and log-Euler simulation of Π under `strategy`.

    Wealth follows X_{i+1} = X_i (1 + m_i) with
    m_i = (r + σ₀² − I + σ₁ η π₁ + λ σ₂ π₂ + u_ratio c) Δt
    + u_ratio σ₃ ΔW₃ + π₁ σ₁ ΔW₁ + π₂ σ₂ ΔW₂ − σ₀ ΔW₀.
    A path whose wealth falls to 1e-8 X₀ or below is absorbed: its wealth stays at that floor.

    Raises:
        InadmissibleStrategy: If `strategy` is not admissible on `grid`.
        ValueError: If `increments` were drawn on another grid.
    """
    if increments.grid != grid:
        raise ValueError(f"Increments are drawn on {increments.grid}, not on {grid}")
    ensure_admissible(strategy, params, grid)
    r, infl, price_index = _simulate_factors(params, increments)

    left = grid.nodes[:-1]
    dt = grid.dt
    inflation, stock, surplus = params.inflation, params.stock, params.surplus
    pi1, pi2, u_ratio = _schedule(strategy, grid)
    s0 = inflation.sigma0(left)
    s1 = bond_vol(params.rate, left, params.T1)
    deterministic = (
        s0**2
        + s1 * eta(params, left) * pi1
        + stock.lam(left) * stock.sigma2(left) * pi2
        + u_ratio * surplus.c(left)
    )
    growth = (
        (r[:, :-1] - infl[:, :-1] + deterministic) * dt
        + u_ratio * surplus.sigma3(left) * increments.dW3
        + pi1 * s1 * increments.dW1
        + pi2 * stock.sigma2(left) * increments.dW2
        - s0 * increments.dW0
    )

    floor = ABSORPTION_FLOOR * params.X0
    raw = params.X0 * np.cumprod(1.0 + growth, axis=1)
    below = raw <= floor
    absorbed = below.any(axis=1)
    wealth = np.empty_like(r)
    wealth[:, 0] = params.X0
    wealth[:, 1:] = raw
    if absorbed.any():
        first = np.argmax(below, axis=1)
        steps = np.arange(grid.n_steps)
        frozen = absorbed[:, None] & (steps[None, :] >= first[:, None])
        wealth[:, 1:] = np.where(frozen, floor, raw)
        logger.warning(
            f"{int(absorbed.sum())} of {len(absorbed)} paths under {strategy.name} were "
            f"absorbed at the wealth floor {floor:.3g}"
        )

    shape = growth.shape
    return Paths(
        grid,
        wealth,
        r,
        infl,
        price_index,
        np.broadcast_to(pi1, shape),
        np.broadcast_to(pi2, shape),
        u_ratio * wealth[:, :-1],
        absorbed,
    )


@functools.lru_cache(maxsize=16)
def _log_d1(params: MarketParams, grid: TimeGrid) -> np.ndarray:
    """log D₁ on the nodes of `grid`: log X₀ plus the integral of the deterministic drift of
    log X* under the optimal policy, by cumulative Simpson on a twice finer grid."""
    fine = np.linspace(grid.t0, grid.T, 2 * grid.n_steps + 1)
    pi1, pi2, u_ratio = solve(params).policy_rates(fine)
    inflation, stock, surplus = params.inflation, params.stock, params.surplus
    s0 = inflation.sigma0(fine)
    s1 = bond_vol(params.rate, fine, params.T1)
    s2, s3 = stock.sigma2(fine), surplus.sigma3(fine)
    integrand = (
        pi1 * eta(params, fine) * s1
        + pi2 * s2 * stock.lam(fine)
        + 0.5 * s0**2
        + u_ratio * surplus.c(fine)
        - 0.5 * (u_ratio * s3) ** 2
        - 0.5 * (s1 * pi1) ** 2
        - 0.5 * (s2 * pi2) ** 2
        + params.rho * s1 * s0 * pi1
    )
    integrand = np.broadcast_to(integrand, fine.shape)
    cumulative = cumulative_simpson(integrand, x=fine, initial=0.0)
    return math.log(params.X0) + cumulative[::2]


def exact_optimal_wealth(
    params: MarketParams, grid: TimeGrid, increments: BrownianIncrements
) -> Paths:
    """Optimal wealth from its explicit exponential form on the same increments.

    X*_t = D₁(t) exp{∫r − ∫I + ∫c/((1−p)σ₃) dW₃ + ∫σ₁π₁* dW₁ + ∫σ₂π₂* dW₂ − ∫σ₀ dW₀}
    with the time integrals by trapezoid on the simulated r and I and the stochastic integrals
    as left-point sums. X* is positive by construction and X*_0 = X₀.
    """
    if increments.grid != grid:
        raise ValueError(f"Increments are drawn on {increments.grid}, not on {grid}")
    r, infl, price_index = _simulate_factors(params, increments)
    strategy = ClosedFormOptimal(params)
    pi1, pi2, u_ratio = _schedule(strategy, grid)

    left = grid.nodes[:-1]
    surplus, stock = params.surplus, params.stock
    noise = (
        u_ratio * surplus.sigma3(left) * increments.dW3
        + pi1 * bond_vol(params.rate, left, params.T1) * increments.dW1
        + pi2 * stock.sigma2(left) * increments.dW2
        - params.inflation.sigma0(left) * increments.dW0
    )
    n_paths = increments.n_paths
    stochastic = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(noise, axis=1)], axis=1)
    carry = cumulative_trapezoid(r - infl, dx=grid.dt, axis=1, initial=0.0)
    wealth = np.exp(_log_d1(params, grid) + carry + stochastic)
    wealth[:, 0] = params.X0

    shape = noise.shape
    return Paths(
        grid,
        wealth,
        r,
        infl,
        price_index,
        np.broadcast_to(pi1, shape),
        np.broadcast_to(pi2, shape),
        u_ratio * wealth[:, :-1],
        np.zeros(n_paths, dtype=bool),
    )


def value_along_path(
    params: MarketParams,
    paths: Paths,
    steps: Optional[Sequence[int]] = None,
    solution: Optional[AncillarySolution] = None,
) -> np.ndarray:
    """G(tᵢ, X*ᵢ, rᵢ, Iᵢ) on the nodes `steps` (default all), shape (n_paths, len(steps)).

    Raises:
        DomainError: If a path has non-positive wealth at one of the nodes.
    """
    solution = solution or solve(params)
    index = np.arange(paths.grid.n_steps + 1) if steps is None else np.asarray(steps, dtype=int)
    times = paths.grid.nodes[index]
    return np.asarray(
        solution.value(times[None, :], paths.X[:, index], paths.r[:, index], paths.I[:, index])
    ).reshape(paths.n_paths, len(index))


def terminal_gap(
    params: MarketParams, grid: TimeGrid, increments: BrownianIncrements
) -> np.ndarray:
    """Per-path relative gap |X_T − X*_T| / X*_T between the Euler path under the optimal
    policy and the exact optimal wealth on the same increments."""
    euler = simulate_path(params, ClosedFormOptimal(params), grid, increments)
    exact = exact_optimal_wealth(params, grid, increments)
    return np.abs(euler.X[:, -1] - exact.X[:, -1]) / exact.X[:, -1]


TRACE_COLUMNS = ["path", "step", "t", "X", "r", "I", "Pi", "pi1", "pi2", "u"]


def trace_frame(paths: Paths, first_path: int = 0) -> pd.DataFrame:
    """One row per path and node with the columns of `TRACE_COLUMNS`.

    Controls at the last node are those the strategy would apply there.
    """
    n_paths, n_nodes = paths.X.shape

    def with_last(controls: np.ndarray) -> np.ndarray:
        return np.concatenate([controls, controls[:, -1:]], axis=1)

    u = with_last(paths.u)
    u[:, -1] = paths.u[:, -1] / paths.X[:, -2] * paths.X[:, -1]
    columns = {
        "path": np.repeat(np.arange(first_path, first_path + n_paths), n_nodes),
        "step": np.tile(np.arange(n_nodes), n_paths),
        "t": np.tile(paths.grid.nodes, n_paths),
        "X": paths.X.ravel(),
        "r": paths.r.ravel(),
        "I": paths.I.ravel(),
        "Pi": paths.Pi.ravel(),
        "pi1": with_last(paths.pi1).ravel(),
        "pi2": with_last(paths.pi2).ravel(),
        "u": u.ravel(),
    }
    return pd.DataFrame(columns, columns=TRACE_COLUMNS)


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Write `frame` with 12 significant digits, '.' decimals and LF line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path
