"""Run configuration: an INI-style file with [market], [rate], [inflation], [stock], [surplus]
and [run] sections."""

import configparser
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

from ._models import (
    CoefficientFn,
    HoLee,
    InflationParams,
    MarketParams,
    RateModel,
    StockParams,
    SurplusParams,
    Vasicek,
    validate,
    xi_from_eta,
)

logger = logging.getLogger("reinvest")

MODELS = ("holee", "vasicek")
TRACE_SCHEMES = ("exact", "euler")

# Defaults for every optional key; keys without an entry here are required or have no default.
_DEFAULTS: Dict[str, Dict[str, str]] = {
    "market": {"X0": "1", "delta": "1e6"},
    "rate": {"model": "holee", "a_tilde": "0.005", "theta": "0.002", "r0": "0.03"},
    "inflation": {"alpha": "0.02", "I0": "0.02", "Pi0": "1"},
    "stock": {"lambda": "0.2", "sigma2": "0.2", "S0": "1"},
    "surplus": {"c": "0.1", "sigma3": "1.0", "R0": "0"},
    "run": {
        "seed": "20240601",
        "steps_per_year": "250",
        "n_paths": "5",
        "verify_paths": "200000",
        "verify_horizon": "5",
        "batch_size": "2048",
        "workers": "4",
        "p_sweep": "0.3, 0.5, 0.7",
        "out": "out",
        "trace_scheme": "exact",
    },
}
_KEYS: Dict[str, Tuple[str, ...]] = {
    "market": ("T", "T1", "p", "rho", "X0", "delta", "eta"),
    "rate": ("model", "b", "xi", "eta", "a_tilde", "theta", "b_hat", "r0"),
    "inflation": ("alpha", "beta", "sigma0", "sigma0_bar", "I0", "Pi0"),
    "stock": ("lambda", "sigma2", "S0"),
    "surplus": ("c", "sigma3", "R0"),
    "run": tuple(_DEFAULTS["run"]),
}


class ConfigError(ValueError):
    """Error raised for an unreadable or invalid configuration. Lists every problem found."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("Invalid configuration:\n" + "\n".join(f"  {e}" for e in self.errors))


@dataclass(frozen=True)
class RunConfig:
    """Market parameters for the selected rate model plus the settings of a run.

    Attributes:
        params: Parameters with the rate model named by `model`.
        rates: Every rate model the configuration defines; Vasicek only if `b_hat` is given.
        model: Selected rate model, "holee" or "vasicek".
        seed: Master seed of all random streams.
        steps_per_year: Resolution of simulation grids.
        n_paths: Number of demonstration traces written by `simulate`.
        verify_paths: Number of Monte Carlo paths of `verify`.
        verify_horizon: Horizon that replaces T during verification.
        batch_size: Paths per Monte Carlo batch.
        workers: Batches run concurrently.
        p_sweep: Utility exponents of the bond-proportion figures.
        out: Output directory.
        trace_scheme: "exact" or "euler" wealth in the traces of `simulate`.
    """

    params: MarketParams
    rates: Mapping[str, RateModel] = field(compare=False)
    model: str = "holee"
    seed: int = 20240601
    steps_per_year: int = 250
    n_paths: int = 5
    verify_paths: int = 200000
    verify_horizon: float = 5.0
    batch_size: int = 2048
    workers: int = 4
    p_sweep: Tuple[float, ...] = (0.3, 0.5, 0.7)
    out: Path = Path("out")
    trace_scheme: str = "exact"

    def params_for(self, model: str) -> MarketParams:
        """The market parameters with another rate model.

        Raises:
            ConfigError: If the configuration does not define that model.
        """
        if model not in self.rates:
            raise ConfigError([_missing_model_message(model)])
        return dataclasses.replace(self.params, rate=self.rates[model])

    def with_model(self, model: str) -> "RunConfig":
        return dataclasses.replace(self, params=self.params_for(model), model=model)


def _missing_model_message(model: str) -> str:
    if model == "vasicek":
        return (
            "[rate] b_hat: the Vasicek model requires b_hat, for which the reference parameter set "
            "gives no value; add one to [rate]"
        )
    return f"[rate] model: must be one of {', '.join(MODELS)}, but got {model!r}"


class _Reader:
    """Typed access to the parsed sections that collects problems instead of raising."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        self.errors: List[str] = []

    def raw(self, section: str, key: str, default=None):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        return _DEFAULTS.get(section, {}).get(key, default)

    def has(self, section: str, key: str) -> bool:
        return self.parser.has_option(section, key)

    def _get(self, section: str, key: str, convert, what: str, required: bool):
        text = self.raw(section, key)
        if text is None:
            if required:
                self.errors.append(f"[{section}] {key}: required key is missing")
            return None
        try:
            return convert(text)
        except ValueError:
            self.errors.append(f"[{section}] {key}: {text!r} is not {what}")
            return None

    def number(self, section: str, key: str, *, required: bool = True) -> Optional[float]:
        return self._get(section, key, float, "a number", required)

    def integer(self, section: str, key: str) -> Optional[int]:
        return self._get(section, key, int, "an integer", True)

    def coefficient(self, section: str, key: str, *, required: bool = True):
        return self._get(section, key, parse_coefficient, "a coefficient", required)

    def numbers(self, section: str, key: str) -> Optional[Tuple[float, ...]]:
        return self._get(
            section, key, lambda s: tuple(float(v) for v in s.split(",")), "a list of numbers", True
        )

    def choice(self, section: str, key: str, options: Tuple[str, ...]) -> Optional[str]:
        text = self.raw(section, key)
        if text not in options:
            self.errors.append(f"[{section}] {key}: must be one of {', '.join(options)}")
            return None
        return text


def parse_coefficient(text: str) -> CoefficientFn:
    """Parse a constant ("0.02") or a piecewise-linear table ("0:0.01, 40:0.02").

    Examples:
        >>> from reinvest._config import parse_coefficient
        >>> parse_coefficient("0.02")(5.0)
        0.02
        >>> float(parse_coefficient("0:0.0, 10:1.0")(5.0))
        0.5
    """
    if ":" not in text:
        return CoefficientFn.constant(float(text))
    times, values = [], []
    for item in text.split(","):
        t, _, v = item.partition(":")
        times.append(float(t))
        values.append(float(v))
    return CoefficientFn.table(times, values)


def _read(path: Path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#", ";"), interpolation=None, default_section="__defaults__"
    )
    parser.optionxform = str
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError([f"{path}: {e.strerror or e}"]) from e
    try:
        parser.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError([f"line {e.lineno}: key outside of a [section]"]) from e
    except configparser.ParsingError as e:
        errors = [f"line {lineno}: cannot parse {line}" for lineno, line in e.errors]
        raise ConfigError(errors) from e
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as e:
        raise ConfigError([f"line {e.lineno}: {e.message}"]) from e
    return parser


def _unknown(parser: configparser.ConfigParser) -> List[str]:
    found = []
    for section in parser.sections():
        if section not in _KEYS:
            found.append(f"[{section}]: unknown section")
            continue
        found.extend(
            f"[{section}] {key}: unknown key"
            for key in parser.options(section)
            if key not in _KEYS[section]
        )
    return found


def _xi(reader: _Reader, rho: Optional[float], sigma0) -> Optional[CoefficientFn]:
    places = (("rate", "xi"), ("rate", "eta"), ("market", "eta"))
    given = [(s, k) for s, k in places if reader.has(s, k)]
    if len(given) != 1:
        message = "exactly one of xi and eta is required" if given else "xi or eta is required"
        reader.errors.append(f"[rate] xi: {message}")
        return None
    section, key = given[0]
    value = reader.coefficient(section, key)
    if key == "xi" or value is None or rho is None or sigma0 is None:
        return value
    return xi_from_eta(value, rho, sigma0)


def parse_config(path: Union[str, Path]) -> RunConfig:
    """Read and validate a run configuration.

    Coefficients are numbers or piecewise-linear tables `t:value, t:value, ...`; either `xi` or
    `eta` defines the bond risk premium.

    Raises:
        ConfigError: With every syntax error (by line number), unknown or missing key, malformed
            value and parameter violation found.
    """
    path = Path(path)
    parser = _read(path)
    reader = _Reader(parser)
    reader.errors.extend(_unknown(parser))

    T, T1 = reader.number("market", "T"), reader.number("market", "T1")
    p, rho = reader.number("market", "p"), reader.number("market", "rho")
    X0, delta = reader.number("market", "X0"), reader.number("market", "delta")

    inflation_values = {
        name: reader.coefficient("inflation", name)
        for name in ("alpha", "beta", "sigma0", "sigma0_bar")
    }
    I0, Pi0 = reader.number("inflation", "I0"), reader.number("inflation", "Pi0")

    model = reader.choice("rate", "model", MODELS)
    b, r0 = reader.number("rate", "b"), reader.number("rate", "r0")
    xi = _xi(reader, rho, inflation_values["sigma0"])
    a_tilde, theta = reader.coefficient("rate", "a_tilde"), reader.coefficient("rate", "theta")
    b_hat = reader.number("rate", "b_hat", required=False)

    lam, sigma2 = reader.coefficient("stock", "lambda"), reader.coefficient("stock", "sigma2")
    S0 = reader.number("stock", "S0")
    c, sigma3 = reader.coefficient("surplus", "c"), reader.coefficient("surplus", "sigma3")
    R0 = reader.number("surplus", "R0")

    run = {
        key: reader.integer("run", key)
        for key in ("seed", "steps_per_year", "n_paths", "verify_paths", "batch_size", "workers")
    }
    verify_horizon = reader.number("run", "verify_horizon")
    p_sweep = reader.numbers("run", "p_sweep")
    trace_scheme = reader.choice("run", "trace_scheme", TRACE_SCHEMES)
    out = Path(reader.raw("run", "out"))

    if reader.errors:
        raise ConfigError(reader.errors)

    rates: Dict[str, RateModel] = {"holee": HoLee(b=b, xi=xi, r0=r0, a_tilde=a_tilde)}
    if b_hat is not None:
        rates["vasicek"] = Vasicek(b=b, xi=xi, r0=r0, theta=theta, b_hat=b_hat)
    if model not in rates:
        raise ConfigError([_missing_model_message(model)])

    params = MarketParams(
        rate=rates[model],
        inflation=InflationParams(I0=I0, Pi0=Pi0, **inflation_values),
        stock=StockParams(lam=lam, sigma2=sigma2, S0=S0),
        surplus=SurplusParams(c=c, sigma3=sigma3, R0=R0),
        rho=rho,
        T=T,
        T1=T1,
        p=p,
        X0=X0,
        pi_bound_delta=delta,
    )
    violations = [validate(dataclasses.replace(params, rate=rate)) for rate in rates.values()]
    errors = list(dict.fromkeys(str(v) for found in violations for v in found))
    errors.extend(_run_problems(run, verify_horizon, p_sweep, T1))
    if errors:
        raise ConfigError(errors)

    config = RunConfig(
        params=params,
        rates=rates,
        model=model,
        verify_horizon=verify_horizon,
        p_sweep=p_sweep,
        out=out,
        trace_scheme=trace_scheme,
        **run,
    )
    logger.debug(f"Read configuration {path} (model {model})")
    return config


def _run_problems(
    run: Dict[str, int], verify_horizon: float, p_sweep: Tuple[float, ...], T1: float
) -> List[str]:
    found = []
    if run["seed"] < 0:
        found.append("[run] seed: must be >= 0")
    for key in ("steps_per_year", "n_paths", "batch_size", "workers"):
        if run[key] < 1:
            found.append(f"[run] {key}: must be >= 1")
    if run["verify_paths"] < 2:
        found.append("[run] verify_paths: must be >= 2")
    if not 0 < verify_horizon < T1:
        found.append("[run] verify_horizon: must lie in (0, T1)")
    if not all(0 < p < 1 for p in p_sweep):
        found.append("[run] p_sweep: every p must lie in (0,1)")
    return found


def reference_market_params(model: str = "holee", b_hat: float = 0.05) -> MarketParams:
    """The reference parameter set: T=80, T1=120, η=0.0606, b=0.05, ρ=−0.06, β=0.02, σ₀=0.01,
    σ̄₀=0.026, p=0.5, with the configuration defaults for every other quantity.

    Examples:
        >>> from reinvest._config import reference_market_params
        >>> params = reference_market_params()
        >>> params.T, params.T1, params.p, params.rate.name
        (80.0, 120.0, 0.5, 'holee')
    """
    const = CoefficientFn.constant
    rho, sigma0 = -0.06, const(0.01)
    xi = xi_from_eta(const(0.0606), rho, sigma0)
    if model == "holee":
        rate: RateModel = HoLee(b=0.05, xi=xi, r0=0.03, a_tilde=const(0.005))
    elif model == "vasicek":
        rate = Vasicek(b=0.05, xi=xi, r0=0.03, theta=const(0.002), b_hat=b_hat)
    else:
        raise ValueError(f'Invalid model "{model}". Must be one of "holee", "vasicek"')
    return MarketParams(
        rate=rate,
        inflation=InflationParams(
            alpha=const(0.02), beta=const(0.02), sigma0=sigma0, sigma0_bar=const(0.026), I0=0.02
        ),
        stock=StockParams(lam=const(0.2), sigma2=const(0.2)),
        surplus=SurplusParams(c=const(0.1), sigma3=const(1.0)),
        rho=rho,
        T=80.0,
        T1=120.0,
        p=0.5,
    )
