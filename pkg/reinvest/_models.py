"""Market, inflation, surplus and short-rate parameters with their coefficient functions."""

import math
from dataclasses import dataclass
from typing import ClassVar, List, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid


class DomainError(ValueError):
    """Error raised when a function is evaluated outside of its time or wealth domain."""


def check_time(t, lower: float, upper: float, what: str = "t") -> None:
    """Raise a DomainError unless every value of `t` lies in [lower, upper]."""
    t_arr = np.asarray(t, dtype=float)
    if t_arr.size and (np.any(t_arr < lower) or np.any(t_arr > upper) or np.any(np.isnan(t_arr))):
        bad = t_arr[(t_arr < lower) | (t_arr > upper) | np.isnan(t_arr)].ravel()[0]
        raise DomainError(f"{what}={bad!r} lies outside of [{lower}, {upper}]")


@dataclass(frozen=True)
class CoefficientFn:
    """A deterministic, continuous coefficient of time.

    Either a constant (`times` empty) or a piecewise-linear table with linear interpolation
    between the breakpoints and flat continuation beyond the first and last breakpoint.

    Examples:
        >>> from reinvest import CoefficientFn
        >>> CoefficientFn.constant(0.02)(10.0)
        0.02
        >>> f = CoefficientFn.table([0.0, 10.0], [0.0, 1.0])
        >>> float(f(2.5))
        0.25
        >>> float(f.integral(10.0))
        5.0
    """

    values: Tuple[float, ...]
    times: Tuple[float, ...] = ()

    def __post_init__(self):
        if not self.values:
            raise ValueError("A coefficient needs at least one value")
        if self.times and len(self.times) != len(self.values):
            raise ValueError(
                f"Coefficient table has {len(self.times)} breakpoints but {len(self.values)} values"
            )
        if not self.times and len(self.values) != 1:
            raise ValueError("A constant coefficient takes exactly one value")

    @classmethod
    def constant(cls, value: float) -> "CoefficientFn":
        """Coefficient with the same value at every time."""
        return cls(values=(float(value),))

    @classmethod
    def table(cls, times: Sequence[float], values: Sequence[float]) -> "CoefficientFn":
        """Piecewise-linear coefficient through the points (times[i], values[i])."""
        if len(times) == 1:
            return cls.constant(values[0])
        return cls(values=tuple(float(v) for v in values), times=tuple(float(t) for t in times))

    @property
    def is_constant(self) -> bool:
        return not self.times

    def __call__(self, t):
        if self.is_constant:
            if np.ndim(t) == 0:
                return self.values[0]
            return np.full(np.shape(t), self.values[0])
        return np.interp(t, self.times, self.values)

    def integral(self, t):
        """Exact integral of the coefficient over [0, t]."""
        t_arr = np.asarray(t, dtype=float)
        if self.is_constant:
            out = self.values[0] * t_arr
        else:
            out = self._primitive(t_arr) - self._primitive(np.zeros(()))
        return float(out) if out.ndim == 0 else out

    def _primitive(self, t: np.ndarray) -> np.ndarray:
        knots = np.asarray(self.times)
        vals = np.asarray(self.values)
        cumulative = cumulative_trapezoid(vals, knots, initial=0.0)
        slopes = np.append(np.diff(vals) / np.diff(knots), 0.0)
        idx = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, len(knots) - 1)
        dx = t - knots[idx]
        slope = np.where(t < knots[0], 0.0, slopes[idx])
        return cumulative[idx] + vals[idx] * dx + 0.5 * slope * dx**2

    def linear_combination(self, weight: float, other: "CoefficientFn", other_weight: float):
        """Return `weight * self + other_weight * other` as a new coefficient.

        The sum of two piecewise-linear functions is piecewise linear on the union of their
        breakpoints, so the result is exact.
        """
        if self.is_constant and other.is_constant:
            return CoefficientFn.constant(weight * self.values[0] + other_weight * other.values[0])
        knots = np.union1d(np.asarray(self.times), np.asarray(other.times))
        values = weight * np.asarray(self(knots)) + other_weight * np.asarray(other(knots))
        return CoefficientFn.table(knots.tolist(), values.tolist())

    def bounds(self, lower: float, upper: float) -> Tuple[float, float]:
        """Minimum and maximum over [lower, upper] (attained at breakpoints or the ends)."""
        points = [lower, upper] + [t for t in self.times if lower < t < upper]
        samples = np.asarray(self(np.asarray(points)), dtype=float)
        return float(samples.min()), float(samples.max())

    def problems(self) -> List[str]:
        """Structural problems of the coefficient (non-finite values, unordered breakpoints)."""
        found = []
        if not all(math.isfinite(v) for v in self.values):
            found.append("values must be finite")
        if self.times:
            if not all(math.isfinite(t) for t in self.times):
                found.append("breakpoints must be finite")
            elif any(b <= a for a, b in zip(self.times, self.times[1:])):
                found.append("breakpoints must be strictly increasing")
        return found


@dataclass(frozen=True)
class InflationParams:
    """Price index Π and expected inflation rate I (time-dependent Ornstein-Uhlenbeck)."""

    alpha: CoefficientFn
    beta: CoefficientFn
    sigma0: CoefficientFn
    sigma0_bar: CoefficientFn
    I0: float
    Pi0: float = 1.0


@dataclass(frozen=True)
class HoLee:
    """Ho-Lee short rate: dr = (ã(t) + b ξ(t)) dt + b dW₁."""

    b: float
    xi: CoefficientFn
    r0: float
    a_tilde: CoefficientFn
    name: ClassVar[str] = "holee"

    def drift(self, t, r):
        return self.a_tilde(t) + self.b * self.xi(t) + 0.0 * np.asarray(r)

    def bond_volatility(self, t, T1: float):
        return -self.b * (T1 - np.asarray(t, dtype=float))


@dataclass(frozen=True)
class Vasicek:
    """Vasicek short rate: dr = (θ(t) − b̂ r + b ξ(t)) dt + b dW₁."""

    b: float
    xi: CoefficientFn
    r0: float
    theta: CoefficientFn
    b_hat: float
    name: ClassVar[str] = "vasicek"

    def drift(self, t, r):
        return self.theta(t) - self.b_hat * np.asarray(r) + self.b * self.xi(t)

    def bond_volatility(self, t, T1: float):
        return (self.b / self.b_hat) * np.expm1(-self.b_hat * (T1 - np.asarray(t, dtype=float)))


RateModel = Union[HoLee, Vasicek]


@dataclass(frozen=True)
class StockParams:
    """Stock with Sharpe-style premium `lam` = (μ − r)/σ₂ and volatility σ₂."""

    lam: CoefficientFn
    sigma2: CoefficientFn
    S0: float = 1.0


@dataclass(frozen=True)
class SurplusParams:
    """Diffusion approximation of the real surplus: dR = c dt + σ₃ dW₃."""

    c: CoefficientFn
    sigma3: CoefficientFn
    R0: float = 0.0


@dataclass(frozen=True)
class MarketParams:
    """All parameters of the investment-reinsurance problem.

    Attributes:
        rate: Ho-Lee or Vasicek short-rate model.
        inflation: Price index and inflation-rate dynamics.
        stock: Stock premium and volatility.
        surplus: Premium rate and claim volatility of the insurer.
        rho: Correlation of the rate noise W₁ and the price-index noise W₀.
        T: Investment horizon in years.
        T1: Maturity of the zero-coupon bond, T1 > T.
        p: Exponent of the power utility U(x) = x^p / p, 0 < p < 1.
        X0: Initial real wealth.
        pi_bound_delta: Admissibility bound δ on |π₁| and |π₂|.
    """

    rate: RateModel
    inflation: InflationParams
    stock: StockParams
    surplus: SurplusParams
    rho: float
    T: float
    T1: float
    p: float
    X0: float = 1.0
    pi_bound_delta: float = 1e6


@dataclass(frozen=True)
class Violation:
    """A parameter invariant that does not hold."""

    field: str
    message: str

    def __str__(self):
        return self.message


def rate_drift(model: RateModel, t, r, T1: float):
    """Drift a(t) of the short rate.

    Args:
        model: The short-rate model.
        t: Time in years, scalar or array.
        r: Current short rate, scalar or array.
        T1: Upper end of the time domain (bond maturity). Required, so the domain check always
            runs.

    Returns:
        ã(t) + b ξ(t) for Ho-Lee (independent of r), θ(t) − b̂ r + b ξ(t) for Vasicek.

    Raises:
        DomainError: If t lies outside of [0, T1].

    Examples:
        >>> from reinvest import CoefficientFn, HoLee, rate_drift
        >>> model = HoLee(b=0.05, xi=CoefficientFn.constant(0.0612), r0=0.03,
        ...               a_tilde=CoefficientFn.constant(0.01))
        >>> round(float(rate_drift(model, 0.0, 0.03, T1=120.0)), 8)
        0.01306
    """
    check_time(t, 0.0, T1)
    return model.drift(t, r)


def bond_vol(model: RateModel, t, T1: float):
    """Volatility σ₁(t) of the zero-coupon bond with maturity T1.

    Negative for t < T1 and zero at maturity: −b(T1 − t) for Ho-Lee,
    (b/b̂)(exp{−b̂(T1 − t)} − 1) for Vasicek.

    Raises:
        DomainError: If t lies outside of [0, T1].
    """
    check_time(t, 0.0, T1)
    return model.bond_volatility(t, T1)


def eta(params: MarketParams, t):
    """Net bond risk premium η(t) = ξ(t) − ρ σ₀(t)."""
    check_time(t, 0.0, params.T)
    return params.rate.xi(t) - params.rho * params.inflation.sigma0(t)


def xi_from_eta(eta_fn: CoefficientFn, rho: float, sigma0: CoefficientFn) -> CoefficientFn:
    """Reconstruct ξ(t) = η(t) + ρ σ₀(t) from a stated η."""
    return eta_fn.linear_combination(1.0, sigma0, rho)


def _coefficients(params: MarketParams):
    rate = params.rate
    named = {
        "rate.xi": rate.xi,
        "inflation.alpha": params.inflation.alpha,
        "inflation.beta": params.inflation.beta,
        "inflation.sigma0": params.inflation.sigma0,
        "inflation.sigma0_bar": params.inflation.sigma0_bar,
        "stock.lambda": params.stock.lam,
        "stock.sigma2": params.stock.sigma2,
        "surplus.c": params.surplus.c,
        "surplus.sigma3": params.surplus.sigma3,
    }
    if isinstance(rate, HoLee):
        named["rate.a_tilde"] = rate.a_tilde
    else:
        named["rate.theta"] = rate.theta
    return named


def validate(params: MarketParams) -> List[Violation]:  # noqa: C901, PLR0912
    """Check every parameter invariant.

    Returns:
        An empty list if all invariants hold, otherwise one `Violation` per broken rule.

    Examples:
        >>> import dataclasses
        >>> from reinvest import validate
        >>> from reinvest._config import reference_market_params
        >>> validate(reference_market_params())
        []
        >>> [str(v) for v in validate(dataclasses.replace(reference_market_params(), p=1.2))]
        ['p must lie in (0,1)']
    """
    found: List[Violation] = []

    def require(ok: bool, name: str, message: str):
        if not ok:
            found.append(Violation(name, message))

    require(params.T > 0, "T", "T must be positive")
    require(params.T1 > params.T, "T1", "T1 must exceed T")
    require(0 < params.p < 1, "p", "p must lie in (0,1)")
    require(-1 <= params.rho <= 1, "rho", "rho must lie in [-1,1]")
    require(params.X0 > 0, "X0", "X0 must be positive")
    require(params.pi_bound_delta > 0, "pi_bound_delta", "delta must be positive")
    require(params.inflation.Pi0 > 0, "inflation.Pi0", "Pi0 must be positive")
    require(params.stock.S0 > 0, "stock.S0", "S0 must be positive")
    require(params.rate.b > 0, "rate.b", "b must be positive")
    if isinstance(params.rate, Vasicek):
        require(params.rate.b_hat > 0, "rate.b_hat", "b_hat must be positive")

    structurally_sound = True
    for name, coefficient in _coefficients(params).items():
        for problem in coefficient.problems():
            structurally_sound = False
            found.append(Violation(name, f"{name}: {problem}"))
    if not structurally_sound or not params.T > 0:
        return found

    horizon = (0.0, params.T)
    require(
        params.inflation.beta.bounds(*horizon)[0] >= 0,
        "inflation.beta",
        "beta must be non-negative on [0,T]",
    )
    positive = {
        "stock.sigma2": params.stock.sigma2,
        "surplus.c": params.surplus.c,
        "surplus.sigma3": params.surplus.sigma3,
    }
    for name, coefficient in positive.items():
        short = name.split(".")[1]
        require(coefficient.bounds(*horizon)[0] > 0, name, f"{short} must be positive on [0,T]")
    return found
