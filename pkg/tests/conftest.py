import re
from pathlib import Path
from typing import Union

import pytest

from reinvest import (
    CoefficientFn,
    HoLee,
    InflationParams,
    MarketParams,
    StockParams,
    SurplusParams,
    Vasicek,
)

REFERENCE_CONFIG = Path(__file__).parents[1] / "configs" / "reference.cfg"

Coefficient = Union[float, CoefficientFn]


@pytest.fixture(params=["holee", "vasicek"])
def model(request):
    """Both short-rate models."""
    return request.param


def _coefficient(value: Coefficient) -> CoefficientFn:
    return value if isinstance(value, CoefficientFn) else CoefficientFn.constant(value)


def build_params(
    model: str = "holee",
    *,
    T: float = 80.0,
    T1: float = 120.0,
    p: float = 0.5,
    rho: float = -0.06,
    b: float = 0.05,
    xi: Coefficient = 0.06,
    a_tilde: Coefficient = 0.005,
    theta: Coefficient = 0.002,
    b_hat: float = 0.05,
    r0: float = 0.03,
    alpha: Coefficient = 0.02,
    beta: Coefficient = 0.02,
    sigma0: Coefficient = 0.01,
    sigma0_bar: Coefficient = 0.026,
    I0: float = 0.02,
    lam: Coefficient = 0.2,
    sigma2: Coefficient = 0.2,
    c: Coefficient = 0.1,
    sigma3: Coefficient = 1.0,
    X0: float = 1.0,
    delta: float = 1e6,
) -> MarketParams:
    """Market parameters with the reference values unless overridden. Builds parameter sets
    that validation would reject, e.g. zero volatilities for deterministic limits."""
    if model == "holee":
        rate = HoLee(b=b, xi=_coefficient(xi), r0=r0, a_tilde=_coefficient(a_tilde))
    else:
        rate = Vasicek(b=b, xi=_coefficient(xi), r0=r0, theta=_coefficient(theta), b_hat=b_hat)
    return MarketParams(
        rate=rate,
        inflation=InflationParams(
            alpha=_coefficient(alpha),
            beta=_coefficient(beta),
            sigma0=_coefficient(sigma0),
            sigma0_bar=_coefficient(sigma0_bar),
            I0=I0,
        ),
        stock=StockParams(lam=_coefficient(lam), sigma2=_coefficient(sigma2)),
        surplus=SurplusParams(c=_coefficient(c), sigma3=_coefficient(sigma3)),
        rho=rho,
        T=T,
        T1=T1,
        p=p,
        X0=X0,
        pi_bound_delta=delta,
    )


def rewrite_config(text: str, **values) -> str:
    """Replace the value of `key = value` lines of a configuration text."""
    for key, value in values.items():
        text, n = re.subn(rf"^{key}\s*=.*$", f"{key} = {value}", text, flags=re.MULTILINE)
        assert n == 1, f"{key} not found exactly once"
    return text


@pytest.fixture()
def params():
    """The reference parameter set with the Ho-Lee model."""
    return build_params()


@pytest.fixture()
def model_params(model):
    """The reference parameter set for each rate model."""
    return build_params(model)


@pytest.fixture()
def config_file(tmp_path):
    """Factory writing a copy of the shipped configuration with some values replaced."""

    def write(name: str = "run.cfg", **values) -> Path:
        path = tmp_path / name
        path.write_text(rewrite_config(REFERENCE_CONFIG.read_text(), **values))
        return path

    return write
