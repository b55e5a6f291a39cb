from __future__ import annotations

import math

import pytest
from hypothesis import assume, given, strategies as st
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from lux import analytic as an
from lux.analytic import DomainError
from lux.model import ParameterError, ScaledParams

from conftest import fig3_scaled, ivp_period


def scaled(mu, r, T=12.0, Tl=6.0):
    return ScaledParams(mu_bar=mu, r=r, T=T, T_light=Tl)


feasible_sp = st.builds(
    lambda r, k, frac: scaled(r * 12.0 / (12.0 * frac) * k, r, 12.0, 12.0 * frac),
    st.floats(0.05, 1.2), st.floats(1.05, 6.0), st.floats(0.25, 0.75))


def test_singular_level_formulas_fig3_b():
    # DERIVED: mu_bar=3, r=5/12 (the nu_bar=36 scenario)
    sp = fig3_scaled(36.0)
    assert an.u_sigma(sp) == pytest.approx(math.sqrt(3 * 5 / 12) - 5 / 12, rel=1e-15)
    assert an.y_sigma(sp) == pytest.approx(math.sqrt(3 / (5 / 12)) - 1, rel=1e-15)
    eq = an.equilibrium_summary(sp)
    assert eq.productivity_opt == pytest.approx((math.sqrt(3) - math.sqrt(5 / 12)) ** 2)
    assert not eq.saturated and eq.u_opt == eq.u_sigma


@given(mu=st.floats(0.2, 30.0), r=st.floats(0.01, 2.0))
def test_u_sigma_maximises_equilibrium_productivity(mu, r):
    assume(mu > r * 1.01)
    sp = scaled(mu, r)
    eq = an.equilibrium_summary(sp)
    prod = lambda u: mu * u / (r + u) - u
    us = eq.u_sigma
    h = 1e-4 * max(us, 1e-3)
    assert prod(us) >= prod(us + h) - 1e-14 and prod(us) >= max(prod(max(us - h, 0.0)), 0.0) - 1e-14
    assert prod(us) == pytest.approx(eq.productivity_opt, rel=1e-9, abs=1e-12)
    # at u_sigma the equilibrium is y_sigma
    assert eq.y_star(us) == pytest.approx(an.y_sigma(sp), rel=1e-9, abs=1e-12)
    assert eq.saturated == (us > 1.0)
    assert eq.saturated == (not an.singular_admissible(sp))


def test_mu_below_r_rejected():
    with pytest.raises(ParameterError):
        an.equilibrium_summary(scaled(0.3, 0.5))


@pytest.mark.parametrize("nu", [14.0, 36.0, 64.0])
def test_y0_bounds_are_fixed_points_of_adaptive_maps(nu):
    sp = fig3_scaled(nu)
    fb = an.feasibility(sp)
    assert fb.feasible
    for y0, u in ((fb.y0_max, 0.0), (fb.y0_min, 1.0)):
        if y0 == 0.0:
            continue
        assert ivp_period(y0, lambda t, u=u: u, sp) == pytest.approx(y0, rel=1e-9)


def test_y0_max_matches_independent_root_find():
    sp = fig3_scaled(36.0)
    g = lambda y0: ivp_period(y0, lambda t: 0.0, sp) - y0
    root = brentq(g, 1e-3, (sp.mu_bar - sp.r) / sp.r * 0.999, xtol=1e-14)
    assert an.y0_max(sp) == pytest.approx(root, rel=1e-8)


@given(feasible_sp)
def test_feasibility_iff_positive_y0_max(sp):
    assert an.is_feasible(sp) == (an.y0_max(sp) > 0.0)
    assert an.y0_min(sp) <= an.y0_max(sp)


def test_infeasible_point_of_fig1():
    # TRIVIAL: nu_bar=9, rho=5 lies below the solid line (9 < 10)
    sp = scaled(9 / 12, 5 / 12)
    assert not an.is_feasible(sp)
    assert an.y0_max(sp) == 0.0
    # nu_bar=64 violates the singular admissibility bound: 16/3 > (r+1)^2/r
    assert not an.singular_admissible(fig3_scaled(64.0))
    assert (5 / 12 + 1) ** 2 / (5 / 12) == pytest.approx(4.8167, abs=1e-4)


def _ivp_time(y_from, y_to, u, sp):
    rate = lambda t, z: [sp.mu_bar * z[0] / (1 + z[0]) - (sp.r + u) * z[0]]
    ev = lambda t, z: z[0] - y_to
    ev.terminal = True
    sol = solve_ivp(rate, (0, 1e4), [y_from], events=ev, method="DOP853", rtol=1e-13, atol=1e-15)
    return float(sol.t_events[0][0])


@given(sp=feasible_sp, a=st.floats(0.01, 0.9), b=st.floats(0.01, 0.9), u=st.sampled_from([0.0, 1.0, 0.3]))
def test_light_phase_time_against_event_integration(sp, a, b, u):
    y_eq = an.light_equilibrium(u, sp)
    assume(y_eq > 0.05)
    y_from, y_to = sorted((a * y_eq, b * y_eq))
    assume(y_to - y_from > 1e-3 * y_eq)
    t = an.light_phase_time(y_from, y_to, u, sp)
    assert t == pytest.approx(_ivp_time(y_from, y_to, u, sp), rel=1e-7)
    back = an.light_phase_time(y_to, y_from, u, sp)
    assert back == pytest.approx(-t, rel=1e-9)


@given(sp=feasible_sp, a=st.floats(0.02, 3.0), dt=st.floats(0.01, 6.0), u=st.sampled_from([0.0, 1.0, 0.5]))
def test_light_phase_state_inverts_time(sp, a, dt, u):
    y_eq = an.light_equilibrium(u, sp)
    y0 = a * max(y_eq, 0.2)
    assume(abs(y0 - y_eq) > 1e-6)
    y1 = an.light_phase_state(y0, dt, u, sp)
    assert an.light_phase_time(y0, y1, u, sp) == pytest.approx(dt, rel=1e-8, abs=1e-9)


@given(sp=feasible_sp, a=st.floats(0.05, 0.9), b=st.floats(0.05, 0.9))
def test_light_arc_integral_against_quadrature(sp, a, b):
    u = 1.0
    y_eq = an.light_equilibrium(u, sp)
    assume(y_eq > 0.05)
    y_from, y_to = sorted((a * y_eq, b * y_eq))
    assume(y_to - y_from > 1e-3 * y_eq)
    T = an.light_phase_time(y_from, y_to, u, sp)
    path = solve_ivp(lambda t, z: [sp.mu_bar * z[0] / (1 + z[0]) - (sp.r + u) * z[0]], (0, T),
                     [y_from], dense_output=True, method="DOP853", rtol=1e-13, atol=1e-15)
    ref = quad(lambda t: float(path.sol(t)[0]), 0, T, epsrel=1e-11)[0]
    assert an.light_arc_integral(y_from, y_to, u, sp) == pytest.approx(ref, rel=1e-7)


@given(y=st.floats(1e-3, 10.0), lam=st.floats(0.1, 5.0), dt=st.floats(0.0, 6.0), u=st.floats(0.0, 1.0))
def test_dark_maps_solve_their_odes(y, lam, dt, u):
    sp = fig3_scaled(36.0)
    rt = sp.r + u
    sol = solve_ivp(lambda t, z: [-rt * z[0], rt * z[1] - u], (0, max(dt, 1e-12)), [y, lam],
                    method="DOP853", rtol=1e-13, atol=1e-14)
    yT, lT = sol.y[:, -1]
    assert an.dark_phase_map(y, u, dt, sp) == pytest.approx(yT, rel=1e-9, abs=1e-14)
    assert an.dark_costate_map(lam, u, dt, sp) == pytest.approx(lT, rel=1e-8, abs=1e-9)
    assert an.dark_arc_integral(y, u, dt, sp) == pytest.approx(y * (1 - math.exp(-rt * dt)) / rt,
                                                               rel=1e-12, abs=1e-15)


@given(sp=feasible_sp, frac=st.floats(0.0, 1.0))
def test_net_rate_lower_root(sp, frac):
    top = an.net_rate(an.y_sigma(sp), sp)
    c = frac * top
    y = an.net_rate_lower_root(c, sp)
    assert y <= an.y_sigma(sp) * (1 + 1e-9)
    assert an.net_rate(y, sp) == pytest.approx(c, rel=1e-9, abs=1e-12 * top)
    with pytest.raises(DomainError):
        an.net_rate_lower_root(top * 1.01, sp)


def test_arcs_refuse_to_cross_the_equilibrium():
    sp = fig3_scaled(36.0)
    y_eq = an.light_equilibrium(1.0, sp)
    with pytest.raises(DomainError):
        an.light_phase_time(0.5 * y_eq, 1.5 * y_eq, 1.0, sp)
    with pytest.raises(DomainError):
        an.light_phase_time(-0.1, 0.5, 0.0, sp)
    with pytest.raises(DomainError):
        an.light_phase_time(1e-300, math.inf, 0.0, sp)
