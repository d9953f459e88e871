import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import brokergame as bg
from brokergame.odes import riccati_constant_solution
from brokergame.trader import (export_trader_csv, solve_inventory_coeff,
                               solve_linear_coeffs, solve_speed_filter_variance)


def test_speed_variance_steady_state(params, grid1000, bundle):
    v_t = bundle.trader.var_nu.at_index(grid1000.steps)
    th, sb, ss, p = params.theta_speed, params.sigma_speed, params.sigma_price, params.perm_impact
    steady = ss ** 2 / p ** 2 * (-th + math.sqrt(th ** 2 + (p * sb / ss) ** 2))
    assert abs(v_t - steady) < 1e-6
    assert abs(v_t - 180.0) < 0.01


def test_speed_variance_zero_noise(grid200):
    p = bg.DEFAULT_PARAMS.replace(sigma_speed=0.0)
    tab = solve_speed_filter_variance(p, grid200)
    assert np.all(tab.values == 0.0)


def test_speed_variance_no_impact_linear_ode(grid1000):
    p = bg.DEFAULT_PARAMS.replace(perm_impact=0.0)
    tab = solve_speed_filter_variance(p, grid1000)
    t = grid1000.times
    ref = p.sigma_speed ** 2 * (1.0 - np.exp(-2.0 * p.theta_speed * t)) / (2.0 * p.theta_speed)
    assert np.abs(tab.values - ref).max() < 1e-6


def test_speed_variance_nondecreasing_from_zero(bundle):
    v = bundle.trader.var_nu.values
    assert v[0] == 0.0
    assert np.all(np.diff(v) >= -1e-12)


def test_g2_terminal_value(params, grid1000, bundle):
    v_t = bundle.trader.var_nu.at_index(grid1000.steps)
    expected = -(params.beta0_trader + params.beta1_trader * v_t)
    assert abs(bundle.trader.g2.at_index(grid1000.steps) - expected) < 1e-12
    assert abs(expected - (-0.280)) < 1e-3


def test_g2_analytic_no_running_penalty(grid1000):
    p = bg.DEFAULT_PARAMS.replace(phi0_trader=0.0, phi1_trader=0.0, beta1_trader=0.0)
    var_nu = solve_speed_filter_variance(p, grid1000)
    g2 = solve_inventory_coeff(p, var_nu, grid1000)
    b, beta0 = p.fee_informed, p.beta0_trader
    ref = -beta0 * b / (b + beta0 * (grid1000.horizon - grid1000.times))
    assert np.abs(g2.values - ref).max() < 1e-8


def test_g2_vanishing_penalties_limit(grid200):
    p = bg.DEFAULT_PARAMS.replace(beta0_trader=1e-9, beta1_trader=1e-9,
                                  phi0_trader=1e-9, phi1_trader=1e-9)
    coeffs = bg.solve_trader(p, grid200)
    assert np.abs(coeffs.g2.values).max() <= 1e-6


def test_sign_structure(bundle, grid1000):
    tr = bundle.trader
    assert np.all(tr.g2.values[:-1] < 0.0)
    assert np.all(tr.z1.values >= 0.0)
    assert np.all(tr.z2.values >= 0.0)
    assert np.all(1.0 + bg.DEFAULT_PARAMS.fee_informed * tr.f3.values > 0.0)


def test_zero_impact_kills_z2(grid200):
    p = bg.DEFAULT_PARAMS.replace(perm_impact=0.0)
    coeffs = bg.solve_trader(p, grid200)
    assert np.all(coeffs.z2.values == 0.0)
    assert np.all(coeffs.f2.values == 0.0)


def test_z2_quadrature_oracle(params, grid1000, bundle):
    # closed form: z2(t) = p * int_t^T exp{ int_t^s g2/(2 fee) - theta du } ds
    tr = bundle.trader
    t = grid1000.times
    dt = grid1000.dt
    w = tr.g2.values / (2.0 * params.fee_informed) - params.theta_speed
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * dt)])
    worst = 0.0
    for k in range(0, grid1000.steps + 1, grid1000.steps // 19):
        kernel = np.exp(cum[k:] - cum[k])
        quad = params.perm_impact * dt * (kernel.sum() - 0.5 * (kernel[0] + kernel[-1]))
        worst = max(worst, abs(quad - tr.z2.at_index(k)))
    assert worst < 1e-6


def test_z2_linear_in_impact(params, grid1000, bundle):
    # doubling the impact doubles z2 exactly when the decay kernel is held fixed
    tr = bundle.trader
    p2 = params.replace(perm_impact=2.0 * params.perm_impact)
    z_scaled = solve_linear_coeffs(p2, tr.g2, tr.var_nu, grid1000)
    assert np.abs(z_scaled[1].values - 2.0 * tr.z2.values).max() < 1e-10


def test_terminal_conditions_zero(bundle, grid1000):
    n = grid1000.steps
    for z in bundle.trader.z_tables:
        assert z.at_index(n) == 0.0


def test_control_trivial_cases(bundle, grid1000):
    tr = bundle.trader
    assert bg.trader_control(0.3, 0.0, 0.0, 0.0, tr) == 0.0
    assert bg.trader_control(0.3, 0.0, 0.0, 2.0, tr) < 0.0      # unwinding
    assert bg.trader_control(grid1000.horizon, 1.7, -0.4, 0.0, tr) == 0.0


@settings(max_examples=30, deadline=None)
@given(a1=st.floats(-2, 2), a2=st.floats(-2, 2), n1=st.floats(-2, 2),
       n2=st.floats(-2, 2), q1=st.floats(-2, 2), q2=st.floats(-2, 2),
       t=st.floats(0.0, 1.0))
def test_control_linearity(bundle, a1, a2, n1, n2, q1, q2, t):
    tr = bundle.trader
    lhs = bg.trader_control(t, a1 + a2, n1 + n2, q1 + q2, tr)
    rhs = (bg.trader_control(t, a1, n1, q1, tr)
           + bg.trader_control(t, a2, n2, q2, tr))
    assert abs(lhs - rhs) < 1e-12


def test_admissibility_error_and_downgrade(grid200):
    # a large fee keeps the backward solve tame while 1 + fee*f3 dips below 0
    bad = bg.DEFAULT_PARAMS.replace(fee_informed=0.5, beta0_trader=2.0)
    with pytest.raises(bg.AdmissibilityError):
        bg.solve_trader(bad, grid200)
    with pytest.warns(RuntimeWarning):
        bg.solve_trader(bad, grid200, strict_admissibility=False)


def test_value_function_matches_tables(bundle):
    tr = bundle.trader
    t, s, x, q, a, nh = 0.4, 101.0, 5.0, 1.5, 0.2, -0.05
    g0 = (tr.z3(t) + tr.z4(t) * a + tr.z5(t) * nh + tr.z6(t) * a * nh
          + tr.z7(t) * a ** 2 + tr.z8(t) * nh ** 2)
    g1 = tr.z1(t) * a + tr.z2(t) * nh
    ref = x + q * s + g0 + q * g1 + q * q * tr.g2(t)
    assert bg.trader_value(tr, t, s, x, q, a, nh) == pytest.approx(ref, abs=1e-14)


def test_csv_export_columns(bundle, grid1000):
    buf = io.StringIO()
    export_trader_csv(bundle.trader, buf)
    lines = buf.getvalue().strip().split("\n")
    header = lines[0].split(",")
    assert header == ["t", "var_nu", "g2", "z1", "z2", "z3", "z4", "z5", "z6",
                      "z7", "z8", "f1", "f2", "f3"]
    assert len(lines) == grid1000.steps + 2
