import logging
import math

import numpy as np
import pytest

from reinvest import (
    CoefficientFn,
    DomainError,
    ParameterError,
    ValueQuery,
    bond_vol,
    check_policy_bounds,
    default_step,
    eta,
    ode_residual,
    optimal_policy,
    policy_from_value_derivatives,
    printed_bond_proportion,
    solve,
    solve_k,
    solve_z,
    validate,
    value_function,
)
from tests.conftest import build_params


def _random_times(horizon, n=50, seed=11):
    return np.random.default_rng(seed).uniform(0.01, horizon - 0.01, n)


@pytest.mark.parametrize(
    ("model", "t", "expected"),
    [
        ("holee", 0.0, 40.0),
        ("holee", 40.0, 20.0),
        ("holee", 80.0, 0.0),
        ("vasicek", 0.0, 10.0 * (1.0 - math.exp(-4.0))),
        ("vasicek", 80.0, 0.0),
    ],
)
def test_k(model, t, expected):
    """Rate loading examples with p = 0.5, T = 80 and b̂ = 0.05."""
    assert float(solve_k(build_params(model))(t)) == pytest.approx(expected, abs=1e-12)


def test_k_vasicek_value():
    """k(0) ≈ 9.816844 for Vasicek."""
    assert float(solve_k(build_params("vasicek"))(0.0)) == pytest.approx(9.816844, abs=1e-6)


def test_k_satisfies_its_equation(model_params):
    """k' − b̂ k + p = 0 for Vasicek and k' + p = 0 for Ho-Lee."""
    k = solve_k(model_params)
    t = _random_times(model_params.T)
    b_hat = getattr(model_params.rate, "b_hat", 0.0)
    step = default_step(model_params.T)
    residual = ode_residual(k, t, step, domain=(0.0, model_params.T)) - b_hat * k(t) + 0.5
    np.testing.assert_allclose(residual, 0.0, atol=1e-8)


def test_z_constant_beta():
    """For constant β, z(t) = −(p/β)(1 − exp{−β(T − t)})."""
    z = solve_z(build_params())
    t = np.linspace(0.0, 80.0, 9)
    expected = -(0.5 / 0.02) * -np.expm1(-0.02 * (80.0 - t))
    np.testing.assert_allclose(z(t), expected, rtol=1e-11, atol=1e-13)
    assert float(z(0.0)) == pytest.approx(-19.952587, abs=1e-6)
    assert float(z(80.0)) == 0.0


def test_z_without_mean_reversion():
    """β ≡ 0 gives z(t) = −p(T − t)."""
    z = solve_z(build_params(beta=0.0))
    assert float(z(30.0)) == pytest.approx(-25.0, rel=1e-12)


def test_z_satisfies_its_equation_for_table_beta():
    """z' − β z − p = 0 for a time-dependent β."""
    beta = CoefficientFn.table([0.0, 30.0, 80.0], [0.01, 0.05, 0.02])
    params = build_params(beta=beta)
    z = solve_z(params)
    t = _random_times(params.T)
    step = default_step(params.T)
    residual = ode_residual(z, t, step, domain=(0.0, params.T)) - beta(t) * z(t) - 0.5
    np.testing.assert_allclose(residual, 0.0, atol=1e-6)


def test_h_single_term():
    """With only the reinsurance term left, h ≡ −c²/(2σ₃²(p − 1)) = 0.01."""
    params = build_params(
        b=0.0, xi=0.0, a_tilde=0.0, alpha=0.0, beta=0.0, sigma0=0.0, sigma0_bar=0.0, lam=0.0,
        rho=0.0,
    )
    solution = solve(params)
    np.testing.assert_allclose(solution.h(np.linspace(0.0, 80.0, 11)), 0.01, rtol=1e-12)
    assert float(solution.H_shift(0.0)) == pytest.approx(-0.8, rel=1e-12)
    assert float(solution.f(0.0)) == pytest.approx(math.exp(0.4), rel=1e-12)


def test_h_at_horizon(params):
    """At t = T the terms in k and z drop out."""
    q, rho = params.p - 1.0, params.rho
    s0, lam, c, s3 = 0.01, 0.2, 0.1, 1.0
    et = float(eta(params, 80.0))
    expected = (
        s0**2
        + 0.5 * q * s0**2
        - et**2 / (2 * q)
        - 0.5 * q * rho**2 * s0**2
        + s0 * rho * et
        - lam**2 / (2 * q)
        - c**2 / (2 * s3**2 * q)
    )
    assert float(solve(params).h(80.0)) == pytest.approx(expected, rel=1e-12)


def test_h_without_premiums_ignores_claim_volatility():
    """c ≡ 0 drops the reinsurance term, even where σ₃ vanishes."""
    with_claims = solve(build_params(c=0.0))
    without_claims = solve(build_params(c=0.0, sigma3=0.0))
    t = np.linspace(0.0, 80.0, 5)
    np.testing.assert_allclose(with_claims.h(t), without_claims.h(t), rtol=1e-14)
    np.testing.assert_array_equal(without_claims.policy_rates(t)[2], 0.0)


def test_terminal_conditions(model_params):
    """k, z and H_shift vanish (as +0.0) and f equals one at the horizon."""
    solution = solve(model_params)
    assert float(solution.k(80.0)) == 0.0
    assert float(solution.z(80.0)) == 0.0
    assert float(solution.H_shift(80.0)) == 0.0
    assert float(solution.f(80.0)) == 1.0
    for fn in (solution.k, solution.z, solution.H_shift):
        assert math.copysign(1.0, float(fn(80.0))) == 1.0
        assert math.copysign(1.0, float(fn(np.array([0.0, 80.0]))[-1])) == 1.0


def test_f_satisfies_its_equation(model_params):
    """H_shift' = h, hence f' + p h f = 0."""
    solution = solve(model_params)
    t = _random_times(model_params.T)
    step = default_step(model_params.T)
    h = solution.h(t)
    derivative = ode_residual(solution.H_shift, t, step, domain=(0.0, model_params.T))
    np.testing.assert_allclose(derivative, h, atol=1e-6 * (1.0 + np.max(np.abs(h))))
    relative = ode_residual(solution.f, t, 1e-4) / solution.f(t) + model_params.p * h
    np.testing.assert_allclose(relative, 0.0, atol=1e-6)


def test_f_positive(model_params):
    """f > 0 on [0, T]."""
    f = solve(model_params).f(np.linspace(0.0, 80.0, 161))
    assert np.all(np.isfinite(f))
    assert np.all(f > 0)


def _random_params(seed):
    """A valid parameter set with constant coefficients drawn from moderate ranges."""
    rng = np.random.default_rng(seed)
    horizon = float(rng.uniform(5.0, 30.0))
    return build_params(
        "holee" if seed % 2 else "vasicek",
        T=horizon,
        T1=horizon + float(rng.uniform(5.0, 40.0)),
        p=float(rng.uniform(0.2, 0.8)),
        rho=float(rng.uniform(-0.5, 0.5)),
        b=float(rng.uniform(0.005, 0.03)),
        xi=float(rng.uniform(0.0, 0.1)),
        a_tilde=float(rng.uniform(0.0, 0.01)),
        theta=float(rng.uniform(0.0, 0.01)),
        b_hat=float(rng.uniform(0.02, 0.3)),
        alpha=float(rng.uniform(0.0, 0.05)),
        beta=float(rng.uniform(0.005, 0.1)),
        sigma0=float(rng.uniform(0.005, 0.03)),
        sigma0_bar=float(rng.uniform(0.005, 0.04)),
        lam=float(rng.uniform(0.05, 0.4)),
        sigma2=float(rng.uniform(0.1, 0.4)),
        c=float(rng.uniform(0.02, 0.2)),
        sigma3=float(rng.uniform(0.5, 2.0)),
    )


@pytest.mark.parametrize("seed", range(20))
def test_equations_hold_for_random_parameters(seed):
    """k, z and f solve their differential equations for randomly drawn parameter sets."""
    params = _random_params(seed)
    assert validate(params) == []
    solution = solve(params)
    p, horizon = params.p, params.T
    b_hat = getattr(params.rate, "b_hat", 0.0)
    beta = float(params.inflation.beta(0.0))
    t = _random_times(horizon, n=20, seed=seed)
    step = default_step(horizon)
    domain = (0.0, horizon)

    k_residual = ode_residual(solution.k, t, step, domain=domain) - b_hat * solution.k(t) + p
    np.testing.assert_allclose(k_residual, 0.0, atol=1e-8)
    z_residual = ode_residual(solution.z, t, step, domain=domain) - beta * solution.z(t) - p
    np.testing.assert_allclose(z_residual, 0.0, atol=1e-6)
    h = solution.h(t)
    f_residual = ode_residual(solution.f, t, 1e-4) / solution.f(t) + p * h
    np.testing.assert_allclose(f_residual, 0.0, atol=1e-6)
    assert float(solution.k(horizon)) == 0.0
    assert float(solution.z(horizon)) == 0.0
    assert float(solution.f(horizon)) == 1.0


def test_shifted_primitive_outside_horizon(params):
    """The primitive of h is defined on [0, T] only."""
    with pytest.raises(DomainError):
        solve(params).H_shift(80.5)


def test_solve_is_cached(params):
    """Equal parameter sets share one solution."""
    assert solve(params) is solve(build_params())


def test_p_equal_to_one():
    """p = 1 makes the closed form undefined."""
    with pytest.raises(ParameterError, match="p = 1"):
        solve(build_params(p=1.0))


@pytest.mark.parametrize(
    ("changes", "message"),
    [
        ({"sigma3": 0.0}, "sigma3 must be positive"),
        ({"sigma2": 0.0}, "sigma2 must be positive"),
        ({"model": "vasicek", "b_hat": 0.0}, "requires b_hat > 0"),
    ],
)
def test_unsolvable_parameters(changes, message):
    """Vanishing volatilities or mean reversion are rejected."""
    with pytest.raises(ParameterError, match=message):
        solve(build_params(**changes))


def test_policy_reference_values(params):
    """Controls at t = 0 with the reference parameters and Ho-Lee rates."""
    point = optimal_policy(params, 0.0, 1.0)
    assert point.pi1 == pytest.approx(-0.697142, abs=1e-6)
    assert point.pi2 == pytest.approx(2.0, rel=1e-12)
    assert point.u_ratio == pytest.approx(0.2, rel=1e-12)
    assert point.u == pytest.approx(0.2, rel=1e-12)


def test_policy_vasicek_reference_value():
    """Bond proportion at t = 0 with Vasicek rates."""
    assert optimal_policy(build_params("vasicek"), 0.0, 1.0).pi1 == pytest.approx(
        -1.167430, abs=1e-5
    )


def test_printed_bond_proportion(params):
    """The printed form differs from the first-order condition by the inflation-hedge sign."""
    assert float(printed_bond_proportion(params, 0.0)) == pytest.approx(-0.676392, abs=1e-6)


def test_printed_form_without_inflation_hedge(model):
    """Without inflation volatility in the hedge and with b = b̂, both forms agree."""
    params = build_params(model, sigma0_bar=0.0)
    t = np.linspace(0.0, 80.0, 33)
    np.testing.assert_allclose(
        printed_bond_proportion(params, t), solve(params).policy_rates(t)[0], rtol=1e-12
    )


@pytest.mark.parametrize("x", [0.01, 1.0, 250.0])
def test_policy_proportions_do_not_depend_on_wealth(params, x):
    """Proportions depend on t only and the retention scales with wealth."""
    reference = optimal_policy(params, 12.0, 1.0)
    point = optimal_policy(params, 12.0, x)
    assert point.pi1 == reference.pi1
    assert point.pi2 == reference.pi2
    assert point.u == pytest.approx(reference.u_ratio * x, rel=1e-15)


def test_constant_coefficients_give_constant_stock_and_retention(model_params):
    """π₂ and u/x do not change over time for constant λ, σ₂, c and σ₃."""
    _, pi2, u_ratio = solve(model_params).policy_rates(np.linspace(0.0, 80.0, 41))
    assert np.all(pi2 == pi2[0])
    assert np.all(u_ratio == u_ratio[0])
    assert u_ratio[0] > 0


def test_policy_matches_value_derivatives(model_params):
    """The closed-form controls maximise the HJB equation at random states."""
    rng = np.random.default_rng(5)
    solution = solve(model_params)
    for t, x, r, inflation_rate in zip(
        rng.uniform(0.0, 80.0, 20),
        rng.uniform(0.1, 10.0, 20),
        rng.uniform(-0.02, 0.1, 20),
        rng.uniform(-0.01, 0.05, 20),
    ):
        q = ValueQuery(t=t, x=x, r=r, I=inflation_rate)
        from_derivatives = policy_from_value_derivatives(model_params, q, solution)
        closed = optimal_policy(model_params, t, x, solution)
        assert from_derivatives.pi1 == pytest.approx(closed.pi1, rel=1e-9, abs=1e-12)
        assert from_derivatives.pi2 == pytest.approx(closed.pi2, rel=1e-9)
        assert from_derivatives.u == pytest.approx(closed.u, rel=1e-9)


def test_policy_outside_domain(params):
    """Non-positive wealth and times after T are rejected."""
    with pytest.raises(DomainError, match="x > 0"):
        optimal_policy(params, 1.0, 0.0)
    with pytest.raises(DomainError):
        optimal_policy(params, 81.0, 1.0)


@pytest.mark.parametrize("p", [0.3, 0.5, 0.7])
def test_bond_proportion_increases_over_time(model, p):
    """π₁* does not decrease as the horizon approaches."""
    params = build_params(model, p=p)
    pi1 = solve(params).policy_rates(np.linspace(0.0, 80.0, 201))[0]
    assert np.all(np.diff(pi1) >= -1e-12)


def test_bond_proportion_decreases_with_p(model):
    """Less risk aversion, i.e. larger p, lowers π₁* at every time."""
    t = np.linspace(0.0, 80.0, 81)
    curves = [solve(build_params(model, p=p)).policy_rates(t)[0] for p in (0.3, 0.5, 0.7)]
    assert np.all(curves[0] >= curves[1])
    assert np.all(curves[1] >= curves[2])


def test_holee_bond_proportion_exceeds_vasicek():
    """With equal b and b̂, Ho-Lee asks for a larger π₁* than Vasicek."""
    t = np.linspace(0.0, 80.0, 81)
    holee = solve(build_params("holee")).policy_rates(t)[0]
    vasicek = solve(build_params("vasicek")).policy_rates(t)[0]
    assert np.all(holee >= vasicek)


def test_bond_proportion_uses_bond_volatility(params):
    """At T only the risk premium and the inflation correlation remain."""
    s1 = float(bond_vol(params.rate, 80.0, 120.0))
    expected = -0.0606 / (s1 * -0.5) + (-0.06 * 0.01) / s1
    assert optimal_policy(params, 80.0, 1.0).pi1 == pytest.approx(expected, rel=1e-12)


def test_check_policy_bounds(params, caplog):
    """Proportions above δ are reported and logged."""
    assert check_policy_bounds(params) == []
    tight = build_params(delta=0.5)
    with caplog.at_level(logging.WARNING, logger="reinvest"):
        violations = check_policy_bounds(tight)
    assert [v.field for v in violations] == ["pi1", "pi2"]
    assert "max |pi2| = 2 exceeds delta = 0.5" in caplog.text


def test_value_function_at_horizon(model_params):
    """G(T, x, r, I) = x^p / p."""
    value = value_function(model_params, ValueQuery(t=80.0, x=4.0, r=0.05, I=0.01))
    assert value == pytest.approx(4.0, rel=1e-15)


def test_value_function_at_start(params):
    """G(0, x, r, I) = f(0) exp{k(0) r + z(0) I} x^p / p."""
    solution = solve(params)
    expected = float(solution.f(0.0)) * math.exp(40.0 * 0.03 + float(solution.z(0.0)) * 0.02) * 2
    assert value_function(params, ValueQuery(t=0.0, x=1.0, r=0.03, I=0.02)) == pytest.approx(
        expected, rel=1e-12
    )


def test_value_function_increases_with_wealth(params):
    """G is increasing and concave in x."""
    values = [value_function(params, ValueQuery(t=10.0, x=x, r=0.03, I=0.02)) for x in (1, 2, 3)]
    assert values[0] < values[1] < values[2]
    assert values[1] - values[0] > values[2] - values[1]


@pytest.mark.parametrize(("t", "x"), [(10.0, 0.0), (10.0, -1.0), (-0.1, 1.0), (80.1, 1.0)])
def test_value_function_domain(params, t, x):
    """The value function needs x > 0 and t in [0, T]."""
    with pytest.raises(DomainError):
        value_function(params, ValueQuery(t=t, x=x, r=0.03, I=0.02))
