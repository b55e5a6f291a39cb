from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings
from scipy.integrate import solve_ivp

from lux.model import PhysicalParams, ScaledParams, scale

settings.register_profile("lux", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("lux")

ROOT = Path(__file__).resolve().parents[1]
PARAMS_DIR = ROOT / "params"
FIG3_NU = (14.0, 36.0, 64.0)


def fig3_physical(nu_bar: float = 36.0, **kw) -> PhysicalParams:
    base = dict(nu_bar=nu_bar, kappa=1.0, rho=5.0, D_max=12.0, T_cal=1.0, T_light=0.5)
    base.update(kw)
    return PhysicalParams(**base)


def fig3_scaled(nu_bar: float = 36.0) -> ScaledParams:
    return scale(fig3_physical(nu_bar))


def ivp_period(y0: float, u_of_t, sp: ScaledParams, t_end: float | None = None) -> float:
    """y at the end of the period from an adaptive solver, integrating arc by arc.

    ``u_of_t`` must be piecewise constant; callers pass its breakpoints in
    ``u_of_t.cuts`` if it has any.
    """
    t_end = sp.T if t_end is None else t_end
    cuts = sorted({0.0, sp.T_light, t_end, *getattr(u_of_t, "cuts", ())})
    cuts = [c for c in cuts if c <= t_end]
    y = y0
    for a, b in zip(cuts, cuts[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        mu = sp.mu_bar if mid < sp.T_light else 0.0
        u = u_of_t(mid)
        sol = solve_ivp(lambda t, z: [mu * z[0] / (1 + z[0]) - (sp.r + u) * z[0]], (a, b), [y],
                        method="DOP853", rtol=1e-13, atol=1e-15)
        y = float(sol.y[0, -1])
    return y


def ivp_harvest(y0: float, u_of_t, sp: ScaledParams) -> tuple[float, float]:
    """(y(T), integral of u y) by an adaptive solver on the augmented system."""
    cuts = sorted({0.0, sp.T_light, sp.T, *getattr(u_of_t, "cuts", ())})
    z = [y0, 0.0]
    for a, b in zip(cuts, cuts[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        mu = sp.mu_bar if mid < sp.T_light else 0.0
        u = u_of_t(mid)
        sol = solve_ivp(lambda t, w: [mu * w[0] / (1 + w[0]) - (sp.r + u) * w[0], u * w[0]],
                        (a, b), z, method="DOP853", rtol=1e-13, atol=1e-15)
        z = list(sol.y[:, -1])
    return float(z[0]), float(z[1])


class Piecewise:
    """u(t) from switch times and values, with its breakpoints exposed."""

    def __init__(self, times, values):
        self.cuts = tuple(times)
        self.values = tuple(values)

    def __call__(self, t: float) -> float:
        for c, v in zip(self.cuts, self.values):
            if t < c:
                return v
        return self.values[-1]


@pytest.fixture
def fig3_params_file() -> Path:
    return PARAMS_DIR / "fig3.json"


def rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


__all__ = ["fig3_physical", "fig3_scaled", "ivp_period", "ivp_harvest", "Piecewise", "rel",
           "FIG3_NU", "PARAMS_DIR", "math", "np"]


# acceptance report -----------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
