"""Direct search over the switch times of a given arc pattern.

Refines the switch estimates read off a DP oracle policy without costates:
for fixed switch times the periodic state is the fixed point of the
one-period map, and the harvest of that orbit is maximised directly. The
singular exit is second-order flat in the harvest, so the DP grid alone
cannot place it more precisely than a few tens of steps; exact arc maps can.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq, minimize

from . import analytic as an
from .analytic import DomainError
from .model import ScaledParams
from .oracle import OracleResult, SwitchEstimate, estimate_switches
from .shooting import UNKNOWNS, Structure, _lambar_for_dark_switch

NEG = -math.inf


def _light(y: float, dt: float, u: float, sp: ScaledParams) -> float:
    return an.light_phase_state(y, dt, u, sp)


def _light_int(y_from: float, y_to: float, u: float, sp: ScaledParams) -> float:
    if y_from == y_to:
        return 0.0
    return an.light_arc_integral(y_from, y_to, u, sp)


def _dark_end(ybar: float, t10: float, sp: ScaledParams) -> float:
    return ybar * math.exp(-(sp.r + 1.0) * (t10 - sp.T_light) - sp.r * (sp.T - t10))


def harvest_bang_bang(t01: float, t10: float, sp: ScaledParams) -> tuple[float, float]:
    """(harvest, y0) of the periodic orbit under closed / open / closed switching."""
    if not (0.0 <= t01 <= sp.T_light <= t10 <= sp.T):
        return NEG, math.nan

    def period(y0: float) -> tuple[float, float, float]:
        y01 = _light(y0, t01, 0.0, sp)
        ybar = _light(y01, sp.T_light - t01, 1.0, sp)
        return y01, ybar, _dark_end(ybar, t10, sp)

    cap = (sp.mu_bar - sp.r) / sp.r
    lo = 1e-12 * cap

    def gap(y0: float) -> float:
        return math.log(period(y0)[2]) - math.log(y0)

    try:
        if gap(lo) <= 0.0:
            return NEG, math.nan  # washout: no positive orbit
        y0 = brentq(gap, lo, cap, xtol=1e-15, rtol=1e-15, maxiter=200)
        y01, ybar, _ = period(y0)
        J = _light_int(y01, ybar, 1.0, sp) + an.dark_arc_integral(ybar, 1.0, t10 - sp.T_light, sp)
    except (DomainError, ValueError):
        return NEG, math.nan
    return J, y0


def harvest_bang_singular_bang(ts1: float, t10: float, sp: ScaledParams
                               ) -> tuple[float, float, float]:
    """(harvest, y0, t0s): closed until y_sigma is reached, singular until ts1, open, closed.

    The state leaves the singular level at ``ts1`` whatever ``y0`` was, so the
    periodic ``y0`` follows without a fixed-point solve.
    """
    if not (an.singular_admissible(sp) and 0.0 < ts1 <= sp.T_light <= t10 <= sp.T):
        return NEG, math.nan, math.nan
    ys, us = an.y_sigma(sp), an.u_sigma(sp)
    try:
        ybar = _light(ys, sp.T_light - ts1, 1.0, sp)
        y0 = _dark_end(ybar, t10, sp)
        if not 0.0 < y0 < ys:
            return NEG, math.nan, math.nan
        t0s = an.light_phase_time(y0, ys, 0.0, sp)
        if t0s > ts1:
            return NEG, math.nan, math.nan
        J = (us * ys * (ts1 - t0s) + _light_int(ys, ybar, 1.0, sp)
             + an.dark_arc_integral(ybar, 1.0, t10 - sp.T_light, sp))
    except (DomainError, ValueError):
        return NEG, math.nan, math.nan
    return J, y0, t0s


def _maximise(f: Callable[[np.ndarray], float], x0: np.ndarray, scale: float) -> np.ndarray:
    simplex = np.vstack([x0, x0 + [scale, 0.0], x0 + [0.0, scale]])
    res = minimize(lambda x: -f(x), x0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": 1e-10, "fatol": 1e-15,
                            "maxiter": 4000})
    return np.asarray(res.x)


def refine_switches(est: SwitchEstimate, sp: ScaledParams) -> SwitchEstimate:
    """Switch times of ``est``'s pattern that maximise the exact periodic harvest.

    Patterns without free switch times (constant control, singular until
    dusk) and unrecognised patterns are returned unchanged. The refined
    intervals are single instants; the DP bands stay in ``raw_intervals``.
    """
    s = est.structure
    step = 0.01 * sp.T
    if s is Structure.BANG_BANG:
        x = _maximise(lambda z: harvest_bang_bang(z[0], z[1], sp)[0],
                      np.array([est.switches["t01"], est.switches["t10"]]), step)
        J, y0 = harvest_bang_bang(x[0], x[1], sp)
        sw = {"t01": float(x[0]), "t10": float(x[1])}
    elif s is Structure.BANG_SINGULAR_BANG:
        x = _maximise(lambda z: harvest_bang_singular_bang(z[0], z[1], sp)[0],
                      np.array([est.switches["ts1"], est.switches["t10"]]), step)
        J, y0, t0s = harvest_bang_singular_bang(x[0], x[1], sp)
        sw = {"t0s": float(t0s), "ts1": float(x[0]), "t10": float(x[1])}
    else:
        return est
    if not math.isfinite(J):
        return est
    return replace(est, switches=sw, intervals={k: (v, v) for k, v in sw.items()},
                   y0=float(y0), raw_intervals=dict(est.intervals), harvest=float(J))


def bang_bang_unknowns(t01: float, t10: float, sp: ScaledParams) -> Optional[dict[str, float]]:
    """Full bang-bang unknown vector on the periodic orbit of the given switch times.

    The costate entries follow from the night closure; only the two
    Hamiltonian links are left for Newton to satisfy.
    """
    J, y0 = harvest_bang_bang(t01, t10, sp)
    if not math.isfinite(J):
        return None
    try:
        y01 = _light(y0, t01, 0.0, sp)
        ybar = _light(y01, sp.T_light - t01, 1.0, sp)
    except (DomainError, ValueError):
        return None
    lam0 = math.exp(sp.r * (sp.T - t10))
    vals = (y0, lam0, t01, y01, ybar, _lambar_for_dark_switch(t10 - sp.T_light, sp), t10, y0 * lam0)
    return dict(zip(UNKNOWNS[Structure.BANG_BANG], vals))


def seed_inits(est: SwitchEstimate, sp: ScaledParams) -> list[dict[str, float]]:
    """Shooting seeds from an oracle estimate, best first.

    Besides the raw estimate, a bang-bang orbit maximised from the estimated
    dawn and dusk switches is offered for both bang-bang and bang-singular-bang
    patterns: where the singular arc shrinks to nothing the dawn switch
    becomes tangential and the structural seeds can miss it.
    """
    out = []
    s = est.structure
    if s in (Structure.BANG_BANG, Structure.BANG_SINGULAR_BANG):
        first = est.switches["t01" if s is Structure.BANG_BANG else "t0s"]
        x = _maximise(lambda z: harvest_bang_bang(z[0], z[1], sp)[0],
                      np.array([first, est.switches["t10"]]), 0.01 * sp.T)
        bb = bang_bang_unknowns(float(x[0]), float(x[1]), sp)
        if bb is not None:
            out.append(bb)
    refined = refine_switches(est, sp)
    out.append(refined.init)
    if refined is not est:
        out.append(est.init)
    return out


def oracle_switches(result: OracleResult, sp: ScaledParams, refine: bool = True,
                    **kwargs) -> SwitchEstimate:
    """:func:`estimate_switches` followed, optionally, by :func:`refine_switches`."""
    est = estimate_switches(result, **kwargs)
    return refine_switches(est, sp) if refine else est

