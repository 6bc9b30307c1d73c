import logging
import math

import numpy as np
import pytest

from reinvest import (
    ClosedFormOptimal,
    ConstantMix,
    DomainError,
    InadmissibleStrategy,
    MCEstimate,
    TimeGrid,
    builtin_alternatives,
    dominance_scan,
    initial_value,
    martingale_diagnostic,
    mc_expected_utility,
)
from reinvest._verify import dominance_frame, martingale_frame
from tests.conftest import build_params

CASH = ConstantMix(0.0, 0.0, 0.0, name="cash")


@pytest.fixture(scope="module")
def five_years():
    """Reference parameters over five years with 250 steps per year."""
    return build_params(T=5.0), TimeGrid.from_rate(5.0, 250)


@pytest.fixture(scope="module")
def report(five_years):
    """Dominance scan of the built-in alternatives."""
    params, grid = five_years
    return dominance_scan(
        params, grid, 8000, 12345, builtin_alternatives(params, grid), batch_size=2000, workers=2
    )


def test_estimate_from_samples():
    """Sample mean and standard error of the mean."""
    estimate = MCEstimate.from_samples(np.array([1.0, 2.0, 3.0, 4.0]), seed=3)
    assert estimate.mean == 2.5
    assert estimate.std_error == pytest.approx(math.sqrt(5.0 / 3.0 / 4.0))
    assert estimate.n_paths == 4
    assert estimate.seed == 3


def test_estimate_of_equal_samples():
    """Equal samples give their value and a zero standard error."""
    estimate = MCEstimate.from_samples(np.full(1000, 0.1 + 0.2), seed=0)
    assert estimate.mean == 0.1 + 0.2
    assert estimate.std_error == 0.0


def test_estimate_needs_two_samples():
    """A single sample has no standard error."""
    with pytest.raises(ValueError, match="at least 2 samples"):
        MCEstimate.from_samples(np.array([1.0]), seed=0)


@pytest.mark.parametrize(("target", "expected"), [(1.29, True), (0.71, True), (1.31, False)])
def test_within_band(target, expected):
    """Targets within three standard errors are accepted."""
    assert MCEstimate(1.0, 0.1, 10, 0).within(target) is expected


def test_bank_account_utility():
    """Deterministic wealth gives the exact utility with a zero standard error."""
    params = build_params(
        b=0.0, xi=0.0, a_tilde=0.0, sigma0=0.0, sigma0_bar=0.0, alpha=0.0, I0=0.0, T=1.0
    )
    grid = TimeGrid.from_rate(1.0, 1000)
    estimate = mc_expected_utility(params, CASH, grid, 64, seed=1, batch_size=16)
    assert estimate.std_error == 0.0
    assert estimate.mean == pytest.approx(math.exp(0.03 * 0.5) / 0.5, rel=1e-6)
    assert estimate.within(math.exp(0.03 * 0.5) / 0.5)
    assert estimate.absorbed == 0


def test_initial_value(params):
    """G₀ is the value function at the initial state."""
    g0 = initial_value(params)
    assert g0 > 0
    assert initial_value(build_params(X0=4.0)) == pytest.approx(2.0 * g0, rel=1e-12)


def test_standard_error_scaling(five_years):
    """Four times the paths halve the standard error."""
    params, grid = five_years
    optimal = ClosedFormOptimal(params)
    small = mc_expected_utility(params, optimal, grid, 2000, seed=7, scheme="exact")
    large = mc_expected_utility(params, optimal, grid, 8000, seed=7, scheme="exact")
    assert 0.4 <= large.std_error / small.std_error <= 0.6


def test_estimate_does_not_depend_on_workers(five_years):
    """Batches draw from their own streams, so the thread count does not matter."""
    params, grid = five_years
    optimal = ClosedFormOptimal(params)
    serial = mc_expected_utility(params, optimal, grid, 600, seed=5, batch_size=100)
    threaded = mc_expected_utility(params, optimal, grid, 600, seed=5, batch_size=100, workers=4)
    assert serial == threaded
    other_seed = mc_expected_utility(params, optimal, grid, 600, seed=6, batch_size=100)
    assert other_seed.mean != serial.mean


def test_utility_scales_with_initial_wealth(five_years):
    """Doubling X₀ multiplies every utility by 2^p."""
    params, grid = five_years
    doubled = build_params(T=5.0, X0=2.0)
    base = mc_expected_utility(params, ClosedFormOptimal(params), grid, 200, seed=2)
    scaled = mc_expected_utility(doubled, ClosedFormOptimal(doubled), grid, 200, seed=2)
    assert scaled.mean == pytest.approx(math.sqrt(2.0) * base.mean, rel=1e-12)


def test_exact_and_euler_agree(five_years):
    """On the same noise, Euler and exact optimal wealth give close expected utilities."""
    params, grid = five_years
    optimal = ClosedFormOptimal(params)
    euler = mc_expected_utility(params, optimal, grid, 2000, seed=11)
    exact = mc_expected_utility(params, optimal, grid, 2000, seed=11, scheme="exact")
    assert abs(euler.mean - exact.mean) < max(euler.std_error, exact.std_error)


@pytest.mark.parametrize(
    ("kwargs", "message"),
    [
        ({"n_paths": 1}, "n_paths must be >= 2"),
        ({"scheme": "milstein"}, 'Invalid scheme "milstein"'),
        ({"scheme": "exact", "strategy": CASH}, "only available for the closed-form"),
    ],
)
def test_expected_utility_errors(five_years, kwargs, message):
    """Invalid path counts and schemes are rejected."""
    params, grid = five_years
    arguments = {"strategy": ClosedFormOptimal(params), "n_paths": 10, "scheme": "euler"}
    arguments.update(kwargs)
    with pytest.raises(ValueError, match=message):
        mc_expected_utility(params, grid=grid, seed=0, **arguments)


def test_martingale_diagnostic(five_years):
    """E[G] along the optimal paths stays within three standard errors of G₀."""
    params, grid = five_years
    checks = martingale_diagnostic(
        params, grid, 40000, 2024, [0.0, 1.0, 2.5, 5.0], batch_size=1000, workers=2
    )
    g0 = initial_value(params)
    assert [c.checkpoint for c in checks] == [0.0, 1.0, 2.5, 5.0]
    assert checks[0].estimate.std_error == 0.0
    assert checks[0].estimate.mean == pytest.approx(g0, rel=1e-12)
    for check in checks:
        assert check.G0 == g0
        assert check.within_band
        assert check.estimate.within(g0, band=3.0)
        assert check.estimate.n_paths == 40000


def test_martingale_without_noise():
    """In the deterministic limit G is constant along the path."""
    params = build_params(
        T=5.0, b=1e-12, sigma0=0.0, sigma0_bar=0.0, xi=0.0, a_tilde=0.0, lam=0.0, c=0.0,
        I0=0.01, alpha=0.01, beta=0.02,
    )
    grid = TimeGrid.from_rate(5.0, 100)
    checks = martingale_diagnostic(params, grid, 4, 1, [0.0, 1.3, 2.5, 5.0])
    g0 = initial_value(params)
    for check in checks:
        assert check.estimate.mean == pytest.approx(g0, rel=1e-8)
        assert check.within_band


def test_checkpoints_are_snapped_to_the_grid():
    """Checkpoints between nodes use the nearest node."""
    params = build_params(T=1.0)
    checks = martingale_diagnostic(params, TimeGrid(0.0, 1.0, 4), 2, 0, [0.3])
    assert checks[0].checkpoint == 0.25


def test_checkpoint_outside_grid():
    """Checkpoints must lie on the simulated interval."""
    params = build_params(T=1.0)
    with pytest.raises(DomainError, match="checkpoint"):
        martingale_diagnostic(params, TimeGrid(0.0, 1.0, 4), 2, 0, [1.5])


def test_builtin_alternatives(five_years):
    """Frozen-optimal, all-cash and half-optimal strategies."""
    params, grid = five_years
    alternatives = builtin_alternatives(params, grid)
    assert [s.name for s in alternatives] == ["frozen", "cash", "half"]
    pi1, pi2, u_ratio = ClosedFormOptimal(params).rates(0.0)
    frozen = alternatives[0]
    assert (frozen.pi1, frozen.pi2, frozen.u_ratio) == (float(pi1), float(pi2), float(u_ratio))


def test_dominance_report(report):
    """The optimal policy attains G₀ and no alternative beats it."""
    assert report.ok
    assert [row.strategy for row in report.rows] == ["optimal", "frozen", "cash", "half"]
    assert report.optimal.estimate.within(report.optimal.G0)
    for row in report.alternatives:
        assert not row.violates
        assert row.estimate.n_paths == 8000


def test_cash_is_clearly_worse(report):
    """All cash without insurance business loses more than three pooled standard errors."""
    optimal = report.optimal.estimate
    cash = next(row.estimate for row in report.rows if row.strategy == "cash")
    pooled = math.hypot(optimal.std_error, cash.std_error)
    assert cash.mean < optimal.mean - 3 * pooled


def test_dominance_rejects_inadmissible_alternatives(five_years, caplog):
    """An inadmissible alternative stops the scan before any simulation."""
    params, grid = five_years
    leveraged = ConstantMix(0.0, 5e6, 0.0, name="leveraged")
    with caplog.at_level(logging.INFO, logger="reinvest"):
        with pytest.raises(InadmissibleStrategy, match="leveraged"):
            dominance_scan(params, grid, 10, 0, [CASH, leveraged])
    assert "E[U(X_T)]" not in caplog.text


def test_report_frames(report):
    """Reports are tables with lower-case flags."""
    frame = dominance_frame(report)
    assert list(frame.columns) == [
        "strategy", "mean", "std_error", "n_paths", "absorbed", "G0", "violates"
    ]
    assert frame["violates"].tolist() == ["false"] * 4
    assert frame["n_paths"].tolist() == [8000] * 4


def test_martingale_frame():
    """The martingale table has one row per checkpoint."""
    params = build_params(T=1.0)
    checks = martingale_diagnostic(params, TimeGrid(0.0, 1.0, 10), 50, 3, [0.0, 1.0])
    frame = martingale_frame(checks)
    assert list(frame.columns) == [
        "checkpoint", "mean", "std_error", "n_paths", "G0", "within_band"
    ]
    assert frame["checkpoint"].tolist() == [0.0, 1.0]
    assert set(frame["within_band"]) <= {"true", "false"}
