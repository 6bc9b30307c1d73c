"""Optimal investment and proportional reinsurance of an insurer under inflation and stochastic
interest rates: closed-form policy, path simulation and Monte Carlo verification."""

from ._closedform import (
    AncillarySolution,
    ParameterError,
    PolicyPoint,
    ValueQuery,
    check_policy_bounds,
    optimal_policy,
    policy_from_value_derivatives,
    printed_bond_proportion,
    solve,
    solve_f,
    solve_h,
    solve_k,
    solve_z,
    value_function,
)
from ._config import ConfigError, RunConfig, parse_config, reference_market_params
from ._models import (
    CoefficientFn,
    DomainError,
    HoLee,
    InflationParams,
    MarketParams,
    StockParams,
    SurplusParams,
    Vasicek,
    Violation,
    bond_vol,
    eta,
    rate_drift,
    validate,
    xi_from_eta,
)
from ._numerics import (
    Quadrature,
    QuadratureError,
    QuadratureSpec,
    default_step,
    integrate,
    ode_residual,
    quadrature,
)
from ._parallel import Batch, run_batches, split_batches
from ._simengine import (
    BrownianIncrements,
    ClosedFormOptimal,
    ConstantMix,
    InadmissibleStrategy,
    Paths,
    PathState,
    Strategy,
    Tabulated,
    TimeGrid,
    ensure_admissible,
    exact_optimal_wealth,
    sample_increments,
    simulate_path,
    terminal_gap,
    trace_frame,
    value_along_path,
)
from ._verify import (
    DominanceReport,
    DominanceRow,
    MartingaleCheck,
    MCEstimate,
    builtin_alternatives,
    dominance_scan,
    initial_value,
    martingale_diagnostic,
    mc_expected_utility,
)

__all__ = [
    "AncillarySolution",
    "Batch",
    "BrownianIncrements",
    "ClosedFormOptimal",
    "CoefficientFn",
    "ConfigError",
    "ConstantMix",
    "DomainError",
    "DominanceReport",
    "DominanceRow",
    "HoLee",
    "InadmissibleStrategy",
    "InflationParams",
    "MCEstimate",
    "MarketParams",
    "MartingaleCheck",
    "ParameterError",
    "PathState",
    "Paths",
    "PolicyPoint",
    "Quadrature",
    "QuadratureError",
    "QuadratureSpec",
    "RunConfig",
    "StockParams",
    "Strategy",
    "SurplusParams",
    "Tabulated",
    "TimeGrid",
    "ValueQuery",
    "Vasicek",
    "Violation",
    "bond_vol",
    "builtin_alternatives",
    "check_policy_bounds",
    "default_step",
    "dominance_scan",
    "ensure_admissible",
    "eta",
    "exact_optimal_wealth",
    "initial_value",
    "integrate",
    "martingale_diagnostic",
    "mc_expected_utility",
    "ode_residual",
    "optimal_policy",
    "parse_config",
    "policy_from_value_derivatives",
    "printed_bond_proportion",
    "quadrature",
    "rate_drift",
    "reference_market_params",
    "run_batches",
    "sample_increments",
    "simulate_path",
    "solve",
    "solve_f",
    "solve_h",
    "solve_k",
    "solve_z",
    "split_batches",
    "terminal_gap",
    "trace_frame",
    "validate",
    "value_along_path",
    "value_function",
    "xi_from_eta",
]
