"""Closed-form solution of the HJB equation: ancillary functions, value function and policy."""

import functools
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_simpson

from ._models import (
    DomainError,
    HoLee,
    MarketParams,
    Violation,
    bond_vol,
    check_time,
    eta,
)
from ._numerics import QuadratureSpec, integrate

logger = logging.getLogger("reinvest")

TimeFn = Callable[..., np.ndarray]

_CHUNK = 256
_LOCAL_QUADRATURE = QuadratureSpec(panels=4, max_doublings=2)


class ParameterError(ValueError):
    """Error raised when the parameters make the closed-form solution undefined."""


@dataclass(frozen=True)
class PolicyPoint:
    """Optimal controls at one (t, x).

    Attributes:
        pi1: Proportion of wealth in the zero-coupon bond.
        pi2: Proportion of wealth in the stock.
        u_ratio: Reinsurance retention per unit of wealth, u / x.
        u: Retention level at the queried wealth.
    """

    pi1: float
    pi2: float
    u_ratio: float
    u: float


@dataclass(frozen=True)
class ValueQuery:
    """State (t, x, r, I) at which the value function is evaluated."""

    t: float
    x: float
    r: float
    I: float  # noqa: E741


def _in_chunks(fn: TimeFn, t) -> np.ndarray:
    """Evaluate `fn` on a flattened `t` in slices to bound the size of quadrature arrays."""
    t_arr = np.asarray(t, dtype=float)
    if t_arr.size <= _CHUNK:
        return np.asarray(fn(t_arr), dtype=float)
    flat = t_arr.ravel()
    pieces = [fn(flat[i : i + _CHUNK]) for i in range(0, flat.size, _CHUNK)]
    return np.concatenate(pieces).reshape(t_arr.shape)


def _scalar_or_array(value) -> np.ndarray:
    # + 0.0 turns -0.0 into 0.0
    value = np.asarray(value, dtype=float) + 0.0
    return float(value) if value.ndim == 0 else value


def _require_solvable(params: MarketParams) -> None:
    if params.p == 1:
        raise ParameterError("p = 1 makes the closed form undefined (division by p - 1)")
    surplus = params.surplus
    premiums_vanish = surplus.c.bounds(0.0, params.T) == (0.0, 0.0)
    if not premiums_vanish and surplus.sigma3.bounds(0.0, params.T)[0] <= 0:
        raise ParameterError("sigma3 must be positive on [0,T] when premiums c are non-zero")
    if params.stock.sigma2.bounds(0.0, params.T)[0] <= 0:
        raise ParameterError("sigma2 must be positive on [0,T]")
    if not isinstance(params.rate, HoLee) and not params.rate.b_hat > 0:
        raise ParameterError("The Vasicek model requires b_hat > 0")


def solve_k(params: MarketParams) -> TimeFn:
    """Rate loading k(t) of the ansatz, with k(T) = 0.

    Ho-Lee: k(t) = p(T − t). Vasicek: k(t) = (p/b̂)(1 − exp{b̂(t − T)}).

    Examples:
        >>> from reinvest import solve_k
        >>> from reinvest._config import reference_market_params
        >>> k = solve_k(reference_market_params())
        >>> float(k(0.0)), float(k(80.0))
        (40.0, 0.0)
    """
    p, horizon, rate = params.p, params.T, params.rate
    if isinstance(rate, HoLee):

        def k(t):
            return _scalar_or_array(p * (horizon - np.asarray(t, dtype=float)))

    else:
        b_hat = rate.b_hat

        def k(t):
            return _scalar_or_array(-(p / b_hat) * np.expm1(b_hat * (np.asarray(t) - horizon)))

    return k


def solve_z(params: MarketParams, spec: QuadratureSpec = QuadratureSpec()) -> TimeFn:
    """Inflation loading z(t) = −p ∫ₜᵀ exp{−∫ₜˢ β(v) dv} ds, the solution of z' − βz − p = 0
    with z(T) = 0.

    The outer integral is evaluated with `integrate`; the inner one uses the exact integral of
    the piecewise-linear β. For constant β this equals −(p/β)(1 − exp{−β(T − t)}).
    """
    p, horizon, beta = params.p, params.T, params.inflation.beta

    def discount(t: np.ndarray) -> np.ndarray:
        anchor = np.asarray(beta.integral(t))[..., None]
        return np.asarray(
            integrate(lambda s: np.exp(-(beta.integral(s) - anchor)), t, horizon, spec)
        )

    def z(t):
        return _scalar_or_array(-p * _in_chunks(discount, t))

    return z


def solve_h(params: MarketParams, k: TimeFn, z: TimeFn) -> TimeFn:
    """The bracketed coefficient h(t) of the reduced equation f' + p h f = 0.

    Ho-Lee uses the drift load a(t) = ã(t) + b ξ(t), Vasicek the load θ(t) + b ξ(t).

    Raises:
        ParameterError: If p = 1 or σ₃ vanishes where the premium rate does not.
    """
    _require_solvable(params)
    p, rho, rate = params.p, params.rho, params.rate
    b = rate.b
    q = p - 1.0
    inflation, stock, surplus = params.inflation, params.stock, params.surplus
    load = rate.a_tilde if isinstance(rate, HoLee) else rate.theta

    def h(t):
        t = np.asarray(t, dtype=float)
        kt, zt = np.asarray(k(t)), np.asarray(z(t))
        s0, s0_bar = inflation.sigma0(t), inflation.sigma0_bar(t)
        alpha, beta = inflation.alpha(t), inflation.beta(t)
        xi = rate.xi(t)
        et = xi - rho * s0
        lam, c, s3 = stock.lam(t), surplus.c(t), surplus.sigma3(t)
        drift_load = load(t) + b * xi
        c_sq = np.asarray(c, dtype=float) ** 2
        reinsurance = np.divide(
            c_sq, 2.0 * s3**2 * q, out=np.zeros(np.broadcast(c_sq, s3).shape), where=c_sq != 0
        )
        value = (
            s0**2
            + 0.5 * q * s0**2
            + drift_load * kt / p
            + b**2 * kt**2 / (2 * p)
            + alpha * beta * zt / p
            + s0_bar**2 * zt**2 / (2 * p)
            - s0_bar * s0 * zt
            - kt * rho * s0 * b
            + b * rho * s0_bar * kt * zt / p
            - et**2 / (2 * q)
            - 0.5 * q * rho**2 * s0**2
            - rho**2 * s0_bar**2 * zt**2 / (2 * q)
            - b**2 * kt**2 / (2 * q)
            + s0 * rho * et
            - et * rho * s0_bar * zt / q
            - et * b * kt / q
            + s0_bar * s0 * rho**2 * zt
            + s0 * b * rho * kt
            - s0_bar * rho * b * kt * zt / q
            - lam**2 / (2 * q)
            - reinsurance
        )
        return _scalar_or_array(np.broadcast_to(value, t.shape))

    return h


class _ShiftedPrimitive:
    """H(t) − H(T) for a primitive H of h, tabulated on the quadrature nodes.

    Between nodes the table is completed with a short Simpson integral up to the next node, so
    the value at T is exactly zero and off-node evaluations stay cheap.
    """

    def __init__(self, h: TimeFn, horizon: float, spec: QuadratureSpec):
        self._h = h
        self._horizon = horizon
        self._nodes = np.linspace(0.0, horizon, spec.panels + 1)
        cumulative = cumulative_simpson(_in_chunks(h, self._nodes), x=self._nodes, initial=0.0)
        self._table = cumulative - cumulative[-1]

    def _evaluate(self, t: np.ndarray) -> np.ndarray:
        upper_index = np.searchsorted(self._nodes, t, side="left")
        upper = self._nodes[upper_index]
        local = integrate(self._h, t, upper, _LOCAL_QUADRATURE)
        return self._table[upper_index] - local

    def __call__(self, t):
        check_time(t, 0.0, self._horizon)
        return _scalar_or_array(_in_chunks(self._evaluate, t))


def solve_f(
    params: MarketParams, h: TimeFn, spec: QuadratureSpec = QuadratureSpec()
) -> Tuple[TimeFn, TimeFn]:
    """Solve f' + p h f = 0 with f(T) = 1.

    Returns:
        The pair (f, H_shift) with H_shift(t) = −∫ₜᵀ h(s) ds and f(t) = exp{−p H_shift(t)}.
    """
    p = params.p
    h_shift = _ShiftedPrimitive(h, params.T, spec)

    def f(t):
        return _scalar_or_array(np.exp(-p * np.asarray(h_shift(t))))

    return f, h_shift


@dataclass(frozen=True)
class AncillarySolution:
    """Ancillary functions of the ansatz G = f(t) exp{k(t) r + z(t) I} x^p / p.

    All functions accept scalars or numpy arrays of times in [0, T].
    """

    params: MarketParams
    model: str
    k: TimeFn
    z: TimeFn
    h: TimeFn
    H_shift: TimeFn
    f: TimeFn

    def value(self, t, x, r, inflation_rate):
        """Candidate value G(t, x, r, I), elementwise on broadcast arrays."""
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("The value function needs positive wealth x")
        p = self.params.p
        g = np.asarray(self.f(t)) * np.exp(
            np.asarray(self.k(t)) * r + np.asarray(self.z(t)) * inflation_rate
        )
        return _scalar_or_array(g * x**p / p)

    def policy_rates(self, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Optimal (π₁*, π₂*, u*/x) at the times `t`.

        The bond proportion is the maximiser of the first-order condition for π₁ with the
        ansatz derivatives inserted: −(η + b k + ρ σ̄₀ z) / (σ₁ (p − 1)) + ρ σ₀ / σ₁.
        """
        params = self.params
        check_time(t, 0.0, params.T)
        t = np.asarray(t, dtype=float)
        q = params.p - 1.0
        rho = params.rho
        inflation, stock, surplus = params.inflation, params.stock, params.surplus
        s1 = bond_vol(params.rate, t, params.T1)
        hedge = eta(params, t) + params.rate.b * np.asarray(self.k(t))
        hedge = hedge + rho * inflation.sigma0_bar(t) * np.asarray(self.z(t))
        pi1 = -hedge / (s1 * q) + rho * inflation.sigma0(t) / s1
        pi2 = -stock.lam(t) / (stock.sigma2(t) * q)
        c = np.broadcast_to(np.asarray(surplus.c(t), dtype=float), t.shape)
        u_ratio = np.divide(-c, surplus.sigma3(t) ** 2 * q, out=np.zeros(t.shape), where=c != 0)
        shape = t.shape
        return (
            np.broadcast_to(pi1, shape).astype(float),
            np.broadcast_to(pi2, shape).astype(float),
            np.broadcast_to(u_ratio, shape).astype(float),
        )


@functools.lru_cache(maxsize=32)
def solve(params: MarketParams, spec: QuadratureSpec = QuadratureSpec()) -> AncillarySolution:
    """Build k, z, h, H_shift and f for the parameters' rate model.

    Results are cached per (params, spec); both are immutable.
    """
    k = solve_k(params)
    z = solve_z(params, spec)
    h = solve_h(params, k, z)
    f, h_shift = solve_f(params, h, spec)
    logger.debug(f"Solved ancillary functions for the {params.rate.name} model, T={params.T}")
    return AncillarySolution(params, params.rate.name, k, z, h, h_shift, f)


def value_function(
    params: MarketParams, q: ValueQuery, solution: Optional[AncillarySolution] = None
) -> float:
    """Candidate optimal value G(t, x, r, I) = f(t) exp{k(t) r + z(t) I} x^p / p.

    Raises:
        DomainError: If x <= 0 or t lies outside of [0, T].

    Examples:
        >>> from reinvest import ValueQuery, value_function
        >>> from reinvest._config import reference_market_params
        >>> params = reference_market_params()
        >>> value_function(params, ValueQuery(t=80.0, x=4.0, r=0.05, I=0.01))
        4.0
    """
    if not q.x > 0:
        raise DomainError(f"The value function needs x > 0, but got x={q.x}")
    check_time(q.t, 0.0, params.T)
    solution = solution or solve(params)
    return float(solution.value(q.t, q.x, q.r, q.I))


def optimal_policy(
    params: MarketParams, t: float, x: float, solution: Optional[AncillarySolution] = None
) -> PolicyPoint:
    """Optimal bond and stock proportions and reinsurance retention at (t, x).

    The proportions depend on t only; the retention is u = u_ratio * x with
    u_ratio = −c / (σ₃² (p − 1)) > 0.

    Raises:
        DomainError: If x <= 0 or t lies outside of [0, T].
    """
    if not x > 0:
        raise DomainError(f"The optimal policy needs x > 0, but got x={x}")
    solution = solution or solve(params)
    pi1, pi2, u_ratio = (float(v) for v in solution.policy_rates(t))
    return PolicyPoint(pi1=pi1, pi2=pi2, u_ratio=u_ratio, u=u_ratio * x)


def policy_from_value_derivatives(
    params: MarketParams, q: ValueQuery, solution: Optional[AncillarySolution] = None
) -> PolicyPoint:
    """Controls from the pointwise maximisation of the HJB equation at (t, x, r, I).

    Evaluates the first-order conditions with the partial derivatives of the candidate G:
    G_x = g x^(p−1), G_xx = g (p − 1) x^(p−2), G_xr = k g x^(p−1), G_xI = z g x^(p−1),
    where g = f(t) exp{k(t) r + z(t) I}.
    """
    solution = solution or solve(params)
    t, x, p = q.t, q.x, params.p
    kt, zt = float(solution.k(t)), float(solution.z(t))
    g = float(solution.f(t)) * np.exp(kt * q.r + zt * q.I)
    g_x = g * x ** (p - 1)
    g_xx = g * (p - 1) * x ** (p - 2)
    g_xr = kt * g * x ** (p - 1)
    g_xi = zt * g * x ** (p - 1)

    inflation, stock, surplus = params.inflation, params.stock, params.surplus
    s1 = float(bond_vol(params.rate, t, params.T1))
    rho = params.rho
    pi1 = (
        -(float(eta(params, t)) / s1) * g_x / (x * g_xx)
        - (inflation.sigma0_bar(t) * rho / s1) * g_xi / (x * g_xx)
        - (params.rate.b / s1) * g_xr / (x * g_xx)
        + inflation.sigma0(t) * rho / s1
    )
    pi2 = -g_x / (x * g_xx) * stock.lam(t) / stock.sigma2(t)
    u = -g_x / g_xx * surplus.c(t) / surplus.sigma3(t) ** 2
    return PolicyPoint(pi1=float(pi1), pi2=float(pi2), u_ratio=float(u / x), u=float(u))


def printed_bond_proportion(
    params: MarketParams, t, solution: Optional[AncillarySolution] = None
):
    """Bond proportion in the closed form as it is commonly printed for this problem.

    Differs from `AncillarySolution.policy_rates` in the sign of the inflation-hedge term and,
    for Vasicek, in the missing factor b/b̂ of the rate-hedge term. The simulation does not
    use it.
    """
    solution = solution or solve(params)
    check_time(t, 0.0, params.T)
    t = np.asarray(t, dtype=float)
    p, q, rho, rate = params.p, params.p - 1.0, params.rho, params.rate
    s1 = bond_vol(rate, t, params.T1)
    discount = -np.asarray(solution.z(t)) / p
    if isinstance(rate, HoLee):
        rate_term = (rate.b / s1) * (p / q) * (params.T - t)
    else:
        rate_term = (1.0 / s1) * (p / q) * -np.expm1(rate.b_hat * (t - params.T))
    value = (
        -(eta(params, t) / s1) / q
        - rate_term
        + rho * params.inflation.sigma0(t) / s1
        - (rho * params.inflation.sigma0_bar(t) / s1) * (p / q) * discount
    )
    return _scalar_or_array(value)


def check_policy_bounds(
    params: MarketParams, n_points: int = 1000, solution: Optional[AncillarySolution] = None
) -> List[Violation]:
    """Check |π₁*|, |π₂*| <= δ on a uniform grid over [0, T].

    Returns:
        One violation per proportion exceeding the admissibility bound; each is also logged as
        a warning.
    """
    solution = solution or solve(params)
    times = np.linspace(0.0, params.T, n_points)
    pi1, pi2, _ = solution.policy_rates(times)
    found = []
    for name, values in (("pi1", pi1), ("pi2", pi2)):
        largest = float(np.max(np.abs(values)))
        if not np.isfinite(largest) or largest > params.pi_bound_delta:
            message = f"max |{name}| = {largest:.6g} exceeds delta = {params.pi_bound_delta:.6g}"
            logger.warning(message)
            found.append(Violation(name, message))
    return found
