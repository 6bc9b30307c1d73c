"""Composite Simpson quadrature with panel doubling and finite-difference derivative checks."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.integrate import simpson

from ._models import DomainError, check_time

logger = logging.getLogger("reinvest")

Real = Union[float, np.ndarray]


class QuadratureError(ArithmeticError):
    """Error raised when an integrand returns a non-finite value."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Settings of the composite Simpson rule.

    Attributes:
        rule: Name of the rule. Only "composite-simpson" is available.
        panels: Number of panels of the first estimate. Must be even and >= 2.
        rel_tol: Accepted change between an estimate and the one with doubled panels,
            relative to `1 + |result|`.
        max_doublings: How often the panel count is doubled before giving up with an accuracy
            warning.
    """

    rule: str = "composite-simpson"
    panels: int = 2048
    rel_tol: float = 1e-10
    max_doublings: int = 3

    def __post_init__(self):
        if self.rule != "composite-simpson":
            raise ValueError(f'Invalid rule "{self.rule}". Must be "composite-simpson"')
        if self.panels < 2 or self.panels % 2:
            raise ValueError(f"panels must be even and >= 2, but got {self.panels}")
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be > 0, but got {self.rel_tol}")
        if not self.max_doublings >= 1:
            raise ValueError(f"max_doublings must be >= 1, but got {self.max_doublings}")


@dataclass(frozen=True)
class Quadrature:
    """Result of `quadrature`: the estimate, the change under the last doubling and whether it
    stayed within tolerance."""

    value: Real
    error: Real
    panels: int
    converged: bool


def _composite_simpson(f: Callable, a: np.ndarray, b: np.ndarray, panels: int) -> np.ndarray:
    unit = np.linspace(0.0, 1.0, panels + 1)
    width = b - a
    x = a[..., None] + width[..., None] * unit
    y = np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)
    finite = np.isfinite(y)
    if not finite.all():
        raise QuadratureError(f"Integrand is not finite at t={x[~finite][0]!r}")
    return simpson(y, dx=1.0 / panels, axis=-1) * width


def _scalar_or_array(value: np.ndarray) -> Real:
    return float(value) if value.ndim == 0 else value


def quadrature(f: Callable, a, b, spec: QuadratureSpec = QuadratureSpec()) -> Quadrature:
    """Integrate `f` over [a, b] with composite Simpson, doubling the panels until stable.

    `a` and `b` may be arrays (broadcast against each other); `f` is then called with an array
    holding one row of abscissae per interval and must evaluate elementwise.

    Args:
        f: Integrand accepting and returning numpy arrays.
        a: Lower bound(s).
        b: Upper bound(s), `b >= a`.
        spec: Rule settings.

    Returns:
        The estimate with the finest panel count used and its convergence information. If the
        last doubling still changed the result by more than `spec.rel_tol`, `converged` is
        False and a warning is logged.

    Raises:
        DomainError: If any lower bound exceeds its upper bound.
        QuadratureError: If `f` returns a non-finite value.
    """
    lower, upper = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    if np.any(lower > upper):
        raise DomainError(f"Integration bounds must satisfy a <= b, but got a={a!r}, b={b!r}")

    panels = spec.panels
    previous = _composite_simpson(f, lower, upper, panels)
    attempts = spec.max_doublings
    while True:
        panels *= 2
        current = _composite_simpson(f, lower, upper, panels)
        error = np.abs(current - previous)
        converged = bool(np.all(error <= spec.rel_tol * (1.0 + np.abs(current))))
        attempts -= 1
        if converged or not attempts:
            break
        logger.debug(f"Simpson change {error.max():.3g} with {panels} panels. Doubling ...")
        previous = current

    if not converged:
        logger.warning(
            f"Quadrature did not reach rel_tol={spec.rel_tol:.3g} with {panels} panels "
            f"(last change {error.max():.3g})"
        )
    return Quadrature(_scalar_or_array(current), _scalar_or_array(error), panels, converged)


def integrate(f: Callable, a, b, spec: QuadratureSpec = QuadratureSpec()) -> Real:
    """Composite Simpson estimate of the integral of `f` over [a, b].

    See `quadrature` for the arguments and errors.

    Examples:
        >>> import numpy as np
        >>> from reinvest import integrate
        >>> round(integrate(lambda s: np.ones_like(s), 0.0, 80.0), 10)
        80.0
        >>> round(integrate(lambda s: np.exp(-0.02 * s), 0.0, 80.0), 4)
        39.9052
    """
    return quadrature(f, a, b, spec).value


def default_step(horizon: float) -> float:
    """Default finite-difference step 1e-5 * max(1, horizon)."""
    return 1e-5 * max(1.0, horizon)


def ode_residual(
    fn: Callable, t, h: float, *, domain: Optional[Tuple[float, float]] = None
) -> Real:
    """Central finite difference (fn(t + h) - fn(t - h)) / (2h).

    Used to check that closed-form solutions satisfy their differential equations, e.g. that
    `ode_residual(k, t, h) + p` vanishes for the Ho-Lee rate loading.

    Raises:
        ValueError: If h is not positive.
        DomainError: If t - h or t + h leaves `domain`.
    """
    if not h > 0:
        raise ValueError(f"Step h must be > 0, but got {h}")
    t_arr = np.asarray(t, dtype=float)
    if domain is not None:
        check_time(t_arr - h, *domain, what="t-h")
        check_time(t_arr + h, *domain, what="t+h")
    derivative = (np.asarray(fn(t_arr + h)) - np.asarray(fn(t_arr - h))) / (2.0 * h)
    return _scalar_or_array(np.asarray(derivative, dtype=float))
