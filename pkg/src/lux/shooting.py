"""Candidate extremals of the periodic harvesting problem.

Each candidate structure fixes the order of control arcs over one period.
Its unknowns (switch times, states and costates at the switches) satisfy an
algebraic system assembled from closed-form arc maps: the light-phase time
map, constancy of the Hamiltonian within the light phase, and exponential
state/costate maps in the dark. The system is solved by damped Newton from
deterministic seeds, the trajectory is rebuilt by RK4, and the result is only
accepted if the maximum-principle sign conditions hold along the whole path.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

import numpy as np
from scipy.optimize import brentq

from . import analytic as an
from .analytic import DomainError
from .model import ControlPolicy, Mode, ScaledParams, Segment, Trajectory
from .newton import NewtonResult, damped_newton
from .simulate import Arc, costate_between, hamiltonian, state_fine

RESIDUAL_TOL = 1e-10
MAX_ITER = 200
SIGN_TOL = 1e-6
TIE_TOL = 1e-9
RECONSTRUCTION_STEP = 1e-4  # fraction of the period
STIFF_STEP = 0.02  # max RK4 step times the local per-capita rate


class Structure(enum.Enum):
    BANG_BANG = "bb"
    BANG_SINGULAR_BANG = "bsb"
    SINGULAR_TO_DARK = "s2d"
    CONSTANT_MAX = "umax"

    @property
    def n_arcs(self) -> int:
        return {"bb": 4, "bsb": 5, "s2d": 3, "umax": 1}[self.value]

    @property
    def is_singular(self) -> bool:
        return self in (Structure.BANG_SINGULAR_BANG, Structure.SINGULAR_TO_DARK)


UNKNOWNS: dict[Structure, tuple[str, ...]] = {
    Structure.BANG_BANG: ("y0", "lam0", "t01", "y01", "ybar", "lambar", "t10", "y10"),
    Structure.BANG_SINGULAR_BANG: ("y0", "lam0", "t0s", "ts1", "ybar", "lambar", "t10", "y10"),
    Structure.SINGULAR_TO_DARK: ("y0", "lam0", "t0s"),
    Structure.CONSTANT_MAX: ("y0", "lam0", "ybar", "lambar"),
}


class ShootingError(RuntimeError):
    pass


class InfeasibleError(ShootingError):
    """No periodic production is possible (mu_bar <= r T / T_light)."""


class StructureNotAdmissible(ShootingError):
    """The structure cannot occur for these parameters (e.g. u_sigma > 1)."""


class NonConvergence(ShootingError):
    pass


class InvariantViolation(ShootingError):
    """Newton converged but the point is not an extremal of this structure."""

    def __init__(self, message: str, candidate: "CandidateSolution"):
        super().__init__(message)
        self.candidate = candidate


class NoCandidate(ShootingError):
    def __init__(self, message: str, attempts: tuple["Attempt", ...]):
        super().__init__(message)
        self.attempts = attempts


def switching_function(lam: float) -> float:
    """dH/du = 1 - lambda: u = 0 where negative, u = 1 where positive."""
    return 1.0 - lam


def kelley(y, lam, sp: ScaledParams):
    """Generalised Legendre-Clebsch (Kelley) quantity on a light-phase singular arc."""
    return 2.0 * lam * sp.mu_bar / (1.0 + y) ** 3


def _open_light_h(y: float, lam: float, sp: ScaledParams) -> float:
    """Hamiltonian in the light with u = 1."""
    return lam * y * (sp.mu_bar / (1.0 + y) - sp.r - 1.0) + y


def _lambar_for_dark_switch(dt: float, sp: ScaledParams) -> float:
    """Costate at T_light that reaches 1 after ``dt`` of darkness with u = 1."""
    rt = sp.r + 1.0
    e = math.exp(rt * dt)
    return (1.0 + (e - 1.0) / rt) / e


def _check_order(*times: float) -> None:
    for a, b in zip(times, times[1:]):
        if b < a:
            raise DomainError("switch times out of order")


# residual systems ----------------------------------------------------------

def residuals_bang_bang(x, sp: ScaledParams) -> np.ndarray:
    y0, lam0, t01, y01, ybar, lambar, t10, y10 = x
    _check_order(0.0, t01, sp.T_light, t10, sp.T)
    return np.array([
        an.light_phase_time(y0, y01, 0.0, sp) - t01,
        an.net_rate(y01, sp) - lam0 * an.net_rate(y0, sp),
        an.light_phase_time(y01, ybar, 1.0, sp) - (sp.T_light - t01),
        _open_light_h(ybar, lambar, sp) - an.net_rate(y01, sp),
        ybar * math.exp(-(sp.r + 1.0) * (t10 - sp.T_light)) - y10,
        an.dark_costate_map(lambar, 1.0, t10 - sp.T_light, sp) - 1.0,
        y10 * math.exp(-sp.r * (sp.T - t10)) - y0,
        math.exp(sp.r * (sp.T - t10)) - lam0,
    ])


def residuals_bang_singular_bang(x, sp: ScaledParams) -> np.ndarray:
    if not an.singular_admissible(sp):
        raise StructureNotAdmissible("u_sigma > 1: no singular arc can exist")
    y0, lam0, t0s, ts1, ybar, lambar, t10, y10 = x
    _check_order(0.0, t0s, ts1, sp.T_light, t10, sp.T)
    ys = an.y_sigma(sp)
    top = an.net_rate(ys, sp)
    if ts1 == sp.T_light:
        leg = ybar - ys
    else:
        leg = an.light_phase_time(ys, ybar, 1.0, sp) - (sp.T_light - ts1)
    return np.array([
        an.light_phase_time(y0, ys, 0.0, sp) - t0s,
        top - lam0 * an.net_rate(y0, sp),
        leg,
        _open_light_h(ybar, lambar, sp) - top,
        ybar * math.exp(-(sp.r + 1.0) * (t10 - sp.T_light)) - y10,
        an.dark_costate_map(lambar, 1.0, t10 - sp.T_light, sp) - 1.0,
        y10 * math.exp(-sp.r * (sp.T - t10)) - y0,
        math.exp(sp.r * (sp.T - t10)) - lam0,
    ])


def residuals_singular_to_dark(x, sp: ScaledParams) -> np.ndarray:
    """Singular arc held until dusk, then u = 0 all night (4 equations, 3 unknowns)."""
    if not an.singular_admissible(sp):
        raise StructureNotAdmissible("u_sigma > 1: no singular arc can exist")
    y0, lam0, t0s = x
    _check_order(0.0, t0s, sp.T_light)
    ys = an.y_sigma(sp)
    return np.array([
        an.light_phase_time(y0, ys, 0.0, sp) - t0s,
        an.net_rate(ys, sp) - lam0 * an.net_rate(y0, sp),
        ys * math.exp(-sp.r * sp.T_dark) - y0,
        math.exp(sp.r * sp.T_dark) - lam0,
    ])


def residuals_constant_max(x, sp: ScaledParams) -> np.ndarray:
    y0, lam0, ybar, lambar = x
    rt = sp.r + 1.0
    e = math.exp(rt * sp.T_dark)
    return np.array([
        an.light_phase_time(y0, ybar, 1.0, sp) - sp.T_light,
        _open_light_h(ybar, lambar, sp) - _open_light_h(y0, lam0, sp),
        ybar / e - y0,
        lambar * e - (e - 1.0) / rt - lam0,
    ])


RESIDUALS: dict[Structure, Callable[[np.ndarray, ScaledParams], np.ndarray]] = {
    Structure.BANG_BANG: residuals_bang_bang,
    Structure.BANG_SINGULAR_BANG: residuals_bang_singular_bang,
    Structure.SINGULAR_TO_DARK: residuals_singular_to_dark,
    Structure.CONSTANT_MAX: residuals_constant_max,
}


# seeds -----------------------------------------------------------------------

def _dark_tail(y0: float, t10: float, sp: ScaledParams) -> tuple[float, float, float, float]:
    """(lam0, y10, ybar, lambar) implied by the night closure for given y0 and t10."""
    lam0 = math.exp(sp.r * (sp.T - t10))
    y10 = y0 * lam0
    ybar = y10 * math.exp((sp.r + 1.0) * (t10 - sp.T_light))
    return lam0, y10, ybar, _lambar_for_dark_switch(t10 - sp.T_light, sp)


def seed_bang_bang(y0: float, t10: float, sp: ScaledParams) -> Optional[np.ndarray]:
    """Full unknown vector from (y0, t10); only the light-phase u=1 equations stay unsolved."""
    try:
        lam0, y10, ybar, lambar = _dark_tail(y0, t10, sp)
        level = lam0 * an.net_rate(y0, sp)
        if level > an.net_rate(an.y_sigma(sp), sp):
            return None
        y01 = an.net_rate_lower_root(level, sp)
        t01 = an.light_phase_time(y0, y01, 0.0, sp)
    except (DomainError, OverflowError):
        return None
    if not 0.0 < t01 < sp.T_light:
        return None
    return np.array([y0, lam0, t01, y01, ybar, lambar, t10, y10])


def _bb_from_t10(t10: float, sp: ScaledParams, n_scan: int = 48) -> list[np.ndarray]:
    """Unknown vectors for a given night switch; all equations but the dusk link hold.

    With t10 fixed the night closure gives lam0 and ybar as multiples of y0,
    the Hamiltonian at dawn gives y01, and the light-phase time budget leaves
    one equation in y0, whose roots are bracketed on a geometric scan.
    """
    lam0 = math.exp(sp.r * (sp.T - t10))
    grow = lam0 * math.exp((sp.r + 1.0) * (t10 - sp.T_light))
    # y0 stays below y0_max; when the u = 1 light arc climbs, ybar also stays
    # below that arc's equilibrium
    y_hi = an.y0_max(sp)
    y_eq = an.light_equilibrium(1.0, sp)
    if y_eq > 0.0:
        y_hi = min(y_hi, y_eq / grow)
    top = an.net_rate(an.y_sigma(sp), sp)
    # and the dawn switch level cannot exceed the maximal net rate
    y_hi = min(y_hi, an.net_rate_lower_root(top / lam0, sp) * (1.0 - 1e-14))
    if y_hi <= 0.0:
        return []

    def budget(y0: float) -> float:
        level = lam0 * an.net_rate(y0, sp)
        if level > top:
            raise DomainError("dawn switch level above the maximal net rate")
        y01 = an.net_rate_lower_root(level, sp)
        return (an.light_phase_time(y0, y01, 0.0, sp)
                + an.light_phase_time(y01, y0 * grow, 1.0, sp) - sp.T_light)

    # roots crowd against both ends: long u = 1 arcs put ybar next to the equilibrium
    grid = y_hi * np.unique(np.concatenate([np.geomspace(1e-8, 1.0, n_scan + 1),
                                            1.0 - np.geomspace(1e-13, 0.5, n_scan // 2)]))
    vals = []
    for y0 in grid:
        try:
            vals.append(budget(float(y0)))
        except (DomainError, OverflowError, ValueError):
            vals.append(math.nan)
    out = []
    for (ya, fa), (yb, fb) in zip(zip(grid, vals), zip(grid[1:], vals[1:])):
        if not (math.isfinite(fa) and math.isfinite(fb) and fa * fb <= 0.0):
            continue
        try:
            y0 = brentq(budget, ya, yb, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        except (DomainError, ValueError):
            continue
        y01 = an.net_rate_lower_root(lam0 * an.net_rate(y0, sp), sp)
        t01 = an.light_phase_time(y0, y01, 0.0, sp)
        if 0.0 < t01 < sp.T_light:
            out.append(np.array([y0, lam0, t01, y01, y0 * grow,
                                 _lambar_for_dark_switch(t10 - sp.T_light, sp), t10, y0 * lam0]))
    return out


def _bsb_from_t10(t10: float, sp: ScaledParams) -> np.ndarray:
    """Unknowns from t10 alone; every equation but the Hamiltonian link at dusk holds."""
    ys = an.y_sigma(sp)
    lam0 = math.exp(sp.r * (sp.T - t10))
    y0 = an.net_rate_lower_root(an.net_rate(ys, sp) / lam0, sp)
    _, y10, ybar, lambar = _dark_tail(y0, t10, sp)
    t0s = an.light_phase_time(y0, ys, 0.0, sp)
    ts1 = sp.T_light - an.light_phase_time(ys, ybar, 1.0, sp)
    return np.array([y0, lam0, t0s, ts1, ybar, lambar, t10, y10])


def _bsb_dusk_state(t10: float, sp: ScaledParams) -> float:
    lam0 = math.exp(sp.r * (sp.T - t10))
    y0 = an.net_rate_lower_root(an.net_rate(an.y_sigma(sp), sp) / lam0, sp)
    return y0 * lam0 * math.exp((sp.r + 1.0) * (t10 - sp.T_light))


def _bsb_window(sp: ScaledParams, n: int) -> np.ndarray:
    """Night switch times whose dusk state lies between the u = 1 equilibrium and y_sigma.

    Only there can the final u = 1 light arc leave y_sigma and end at dusk;
    the window can be far narrower than a uniform scan step.
    """
    ys, y_eq = an.y_sigma(sp), an.light_equilibrium(1.0, sp)
    a, b = sp.T_light + 1e-9 * sp.T_dark, sp.T - 1e-9 * sp.T_dark

    def crossing(level: float) -> Optional[float]:
        f = lambda t: math.log(_bsb_dusk_state(t, sp) / level)
        try:
            fa, fb = f(a), f(b)
            if fa * fb > 0.0:
                return None
            return brentq(f, a, b, xtol=1e-14)
        except (DomainError, OverflowError, ValueError):
            return None

    edges = [t for t in (crossing(ys), crossing(y_eq) if y_eq > 0.0 else a) if t is not None]
    if len(edges) < 2:
        return np.empty(0)
    lo, hi = sorted(edges)
    return np.linspace(lo, hi, n + 2)[1:-1]


def seeds_bang_singular_bang(sp: ScaledParams, n: int = 64) -> list[np.ndarray]:
    """Roots of the one remaining residual along a scan of the night switch time."""
    def link(t10: float) -> float:
        x = _bsb_from_t10(t10, sp)
        if not 0.0 <= x[2] <= x[3] <= sp.T_light:
            raise DomainError("singular arc outside the light phase")
        return _open_light_h(x[4], x[5], sp) - an.net_rate(an.y_sigma(sp), sp)

    grid = np.union1d(sp.T_light + sp.T_dark * (np.arange(1, n) / n), _bsb_window(sp, n))
    vals = []
    for t in grid:
        try:
            vals.append(link(float(t)))
        except (DomainError, OverflowError, ValueError):
            vals.append(math.nan)
    seeds = []
    for (ta, fa), (tb, fb) in zip(zip(grid, vals), zip(grid[1:], vals[1:])):
        if math.isfinite(fa) and math.isfinite(fb) and fa * fb <= 0.0:
            try:
                t = brentq(link, ta, tb, xtol=1e-14, rtol=4 * np.finfo(float).eps)
                seeds.append(_bsb_from_t10(t, sp))
            except (DomainError, ValueError):
                continue
    return seeds


def seeds_bang_bang(sp: ScaledParams, n_t10: int = 12) -> list[np.ndarray]:
    """Reduced seeds along a night-switch grid refined toward T.

    Each seed satisfies every equation except the Hamiltonian link at dusk.
    """
    t10s = sp.T_light + sp.T_dark * (np.arange(n_t10) + 0.5) / n_t10
    # near the constant-control regime the night switch crowds against T; near
    # the feasibility line the whole open window shrinks onto dusk
    fine = sp.T_dark * 4.0 ** -np.arange(2, 9)
    t10s = np.concatenate([t10s, sp.T - fine, sp.T_light + fine])
    out = []
    for t10 in t10s:
        try:
            out.extend(_bb_from_t10(float(t10), sp))
        except (DomainError, OverflowError, ValueError):
            continue
    return out


def seed_singular_to_dark(sp: ScaledParams) -> Optional[np.ndarray]:
    ys = an.y_sigma(sp)
    y0 = ys * math.exp(-sp.r * sp.T_dark)
    try:
        t0s = an.light_phase_time(y0, ys, 0.0, sp)
    except DomainError:
        return None
    return np.array([y0, math.exp(sp.r * sp.T_dark), t0s])


def seed_constant_max(sp: ScaledParams) -> Optional[np.ndarray]:
    """y0 = y0_min, costate from the (linear) periodicity and Hamiltonian equations."""
    y0 = an.y0_min(sp)
    if y0 <= 0.0:
        return None
    rt = sp.r + 1.0
    e = math.exp(rt * sp.T_dark)
    ybar = y0 * e
    # lam0 = lambar e - (e-1)/rt  and  lambar g(ybar) + ybar = lam0 g(y0) + y0
    g = lambda y: y * (sp.mu_bar / (1.0 + y) - rt)
    A = np.array([[1.0, -e], [-g(y0), g(ybar)]])
    b = np.array([-(e - 1.0) / rt, y0 - ybar])
    try:
        lam0, lambar = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return None
    return np.array([y0, lam0, ybar, lambar])


def seeds_for(structure: Structure, sp: ScaledParams) -> list[np.ndarray]:
    if structure is Structure.BANG_BANG:
        return seeds_bang_bang(sp)
    if structure is Structure.BANG_SINGULAR_BANG:
        return seeds_bang_singular_bang(sp)
    s = seed_singular_to_dark(sp) if structure is Structure.SINGULAR_TO_DARK else seed_constant_max(sp)
    return [] if s is None else [s]


def seed_from_init(structure: Structure, init: Mapping[str, float],
                   sp: ScaledParams) -> Optional[np.ndarray]:
    """Unknown vector from a full mapping, or from partial switch estimates."""
    names = UNKNOWNS[structure]
    if all(k in init for k in names):
        return np.array([float(init[k]) for k in names])
    try:
        if structure is Structure.BANG_BANG and "t10" in init:
            reduced = _bb_from_t10(float(init["t10"]), sp)
            y0 = init.get("y0")
            if reduced:
                if y0 is None:
                    return reduced[0]
                return min(reduced, key=lambda x: abs(x[0] - float(y0)))
            return None if y0 is None else seed_bang_bang(float(y0), float(init["t10"]), sp)
        if structure is Structure.BANG_SINGULAR_BANG and "t10" in init:
            return _bsb_from_t10(float(init["t10"]), sp)
    except (DomainError, OverflowError, ValueError):
        return None
    if structure in (Structure.CONSTANT_MAX, Structure.SINGULAR_TO_DARK):
        return seeds_for(structure, sp)[0] if seeds_for(structure, sp) else None
    return None


# solutions -------------------------------------------------------------------

@dataclass(frozen=True)
class Attempt:
    structure: Structure
    status: str
    objective: Optional[float] = None
    residual_norm: Optional[float] = None
    message: str = ""


@dataclass(frozen=True)
class CandidateSolution:
    structure: Structure
    unknowns: dict[str, float]
    residual_norm: float
    objective: float
    trajectory: Trajectory
    policy: ControlPolicy
    checks: dict[str, bool]
    diagnostics: dict[str, float]
    iterations: int = 0
    attempts: tuple[Attempt, ...] = field(default=(), compare=False)

    @property
    def valid(self) -> bool:
        return all(self.checks.values())

    @property
    def y0(self) -> float:
        return self.unknowns["y0"]

    @property
    def switch_times(self) -> dict[str, float]:
        return {k: v for k, v in self.unknowns.items() if k.startswith("t")}

    def failed_checks(self) -> list[str]:
        return [k for k, ok in self.checks.items() if not ok]


def policy_for(structure: Structure, u: Mapping[str, float], sp: ScaledParams) -> ControlPolicy:
    T, Tl = sp.T, sp.T_light
    us = an.u_sigma(sp)
    if structure is Structure.BANG_BANG:
        segs = (Segment.closed(0.0, u["t01"]), Segment.open(u["t01"], u["t10"]),
                Segment.closed(u["t10"], T))
    elif structure is Structure.BANG_SINGULAR_BANG:
        segs = (Segment.closed(0.0, u["t0s"]), Segment.singular(u["t0s"], u["ts1"], us),
                Segment.open(u["ts1"], u["t10"]), Segment.closed(u["t10"], T))
    elif structure is Structure.SINGULAR_TO_DARK:
        segs = (Segment.closed(0.0, u["t0s"]), Segment.singular(u["t0s"], Tl, us),
                Segment.closed(Tl, T))
    else:
        segs = (Segment.open(0.0, T),)
    return ControlPolicy(segs)


def closed_form_objective(structure: Structure, u: Mapping[str, float], sp: ScaledParams) -> float:
    """Harvest over one period from the arc-wise closed forms."""
    if structure is Structure.CONSTANT_MAX:
        return (an.light_arc_integral(u["y0"], u["ybar"], 1.0, sp)
                + an.dark_arc_integral(u["ybar"], 1.0, sp.T_dark, sp))
    ys, us = an.y_sigma(sp), an.u_sigma(sp)
    if structure is Structure.SINGULAR_TO_DARK:
        return us * ys * (sp.T_light - u["t0s"])
    dark = an.dark_arc_integral(u["ybar"], 1.0, u["t10"] - sp.T_light, sp)
    if structure is Structure.BANG_BANG:
        return an.light_arc_integral(u["y01"], u["ybar"], 1.0, sp) + dark
    light = 0.0 if u["ts1"] == sp.T_light else an.light_arc_integral(ys, u["ybar"], 1.0, sp)
    return us * ys * (u["ts1"] - u["t0s"]) + light + dark


GRADING_CHUNKS = 32


def _arc_state(arc: Arc, y_start: float, dt: float, sp: ScaledParams) -> float:
    if arc.mu == 0.0:
        return an.dark_phase_map(y_start, arc.u, dt, sp)
    return an.light_phase_state(y_start, dt, arc.u, sp)


def graded_grid(arc: Arc, y_start: float, sp: ScaledParams, step: float) -> np.ndarray:
    """Fine time grid across ``arc`` whose step follows the local stiffness.

    The arc is cut into equal chunks; the closed-form state at the chunk ends
    bounds the per-capita rate ``mu/(1+y) + r + u`` on each chunk (it is
    monotone in y, y is monotone in t, and it dominates ``|d(rate)/dy|``), and
    each chunk gets enough RK4 steps for both the length bound ``step`` and
    the bound ``STIFF_STEP`` on step times rate.
    Returns ``2n + 1`` times with midpoints at the odd entries.
    """
    length = arc.t1 - arc.t0
    edges = arc.t0 + length * np.arange(GRADING_CHUNKS + 1) / GRADING_CHUNKS
    edges[-1] = arc.t1
    ys = [y_start] + [_arc_state(arc, y_start, e - arc.t0, sp) for e in edges[1:]]
    rate = [arc.mu / (1.0 + y) + sp.r + arc.u for y in ys]
    nodes = [np.array([arc.t0])]
    for i in range(GRADING_CHUNKS):
        h = edges[i + 1] - edges[i]
        n = max(1, math.ceil(h / step - 1e-9), math.ceil(h * max(rate[i], rate[i + 1]) / STIFF_STEP))
        nodes.append(edges[i] + h * np.arange(1, n + 1) / n)
    t = np.concatenate(nodes)
    t[-1] = arc.t1
    tf = np.empty(2 * t.size - 1)
    tf[::2] = t
    tf[1::2] = 0.5 * (t[:-1] + t[1:])
    return tf


def costate_knots(structure: Structure, u: Mapping[str, float],
                  sp: ScaledParams) -> dict[float, float]:
    """Costate values the algebraic system pins at period ends, switches and dusk."""
    knots = {0.0: u["lam0"], sp.T: u["lam0"]}
    if structure is Structure.SINGULAR_TO_DARK:
        knots[sp.T_light] = 1.0
    else:
        knots[sp.T_light] = u["lambar"]
    for name in ("t01", "t0s", "ts1", "t10"):
        if name in u:
            knots[u[name]] = 1.0
    return knots


def reconstruct(structure: Structure, u: Mapping[str, float], sp: ScaledParams,
                step: Optional[float] = None) -> tuple[Trajectory, ControlPolicy, dict[str, float]]:
    """State/costate path of a candidate over one period.

    The state is integrated forward by RK4 across the whole period from y0.
    The costate is integrated arc by arc between the values the algebraic
    system pins at the arc ends, each piece in the direction in which the
    costate equation contracts; the largest mismatch where the pieces meet is
    reported as ``costate_junction_error``.
    """
    policy = policy_for(structure, u, sp)
    step = step or sp.T * RECONSTRUCTION_STEP
    knots = costate_knots(structure, u, sp)
    cuts = sorted({0.0, sp.T_light, sp.T, *policy.boundaries})
    arcs = [Arc(a, b, sp.mu(0.5 * (a + b)), policy.u_at(0.5 * (a + b)))
            for a, b in zip(cuts, cuts[1:]) if b > a]
    ts, ys, us, ls = [], [], [], []
    y = u["y0"]
    harvest = 0.0
    junction = 0.0
    for k, arc in enumerate(arcs):
        tf = graded_grid(arc, y, sp, step)
        yf = state_fine(arc, tf, y, sp.r)
        lam, mismatch = costate_between(arc, tf, yf, sp.r, knots[arc.t0], knots[arc.t1])
        junction = max(junction, mismatch)
        hf = np.diff(tf[::2])
        harvest += arc.u * float(np.sum(hf / 6.0 * (yf[:-1:2] + 4 * yf[1::2] + yf[2::2])))
        last = k + 1 == len(arcs)
        sl = slice(0, None) if last else slice(0, -1)
        ts.append(tf[::2][sl])
        ys.append(yf[::2][sl])
        ls.append(lam[sl])
        us.append(np.full(lam.size, arc.u)[sl])
        y = yf[-1]
    t = np.concatenate(ts)
    t[-1] = sp.T
    yy, uu, lam = np.concatenate(ys), np.concatenate(us), np.concatenate(ls)
    H = hamiltonian(t, yy, uu, lam, sp)
    traj = Trajectory(t=t, y=yy, u=uu, lam=lam, H=H, objective=float(harvest),
                      clamped=bool(np.any(yy < 0)))
    return traj, policy, {"costate_junction_error": float(junction)}


def validate(structure: Structure, u: Mapping[str, float], traj: Trajectory,
             sp: ScaledParams, junction_error: float = 0.0
             ) -> tuple[dict[str, bool], dict[str, float]]:
    """Maximum-principle and structural checks along a reconstructed path."""
    t, y, uu, lam, H = traj.t, traj.y, traj.u, traj.lam, traj.H
    fb = an.feasibility(sp)
    ys = an.y_sigma(sp)
    checks: dict[str, bool] = {}
    diag: dict[str, float] = {}

    per_y = abs(y[-1] - y[0])
    diag["periodicity_y"] = float(per_y)
    diag["costate_junction_error"] = float(junction_error)
    checks["periodic_state"] = per_y <= 1e-8 * max(1.0, y[0])
    checks["periodic_costate"] = junction_error <= 1e-8 * max(1.0, abs(lam[0]))

    light = t < sp.T_light
    dark = t > sp.T_light
    # samples exactly at a switch carry the control of the following arc; skip them for H
    interior = np.ones_like(t, dtype=bool)
    interior[[0, -1]] = False
    h_light = H[light & interior]
    h_dark = H[dark & interior]
    spread_l = float(np.ptp(h_light)) if h_light.size else 0.0
    spread_d = float(np.ptp(h_dark)) if h_dark.size else 0.0
    diag["hamiltonian_spread_light"] = spread_l
    diag["hamiltonian_spread_dark"] = spread_d
    checks["hamiltonian_constant"] = max(spread_l, spread_d) <= 1e-6

    closed = uu == 0.0
    opened = uu == 1.0
    sing = ~(closed | opened)
    checks["sign_u0"] = bool(np.all(lam[closed] >= 1.0 - SIGN_TOL))
    checks["sign_u1"] = bool(np.all(lam[opened] <= 1.0 + SIGN_TOL))
    checks["sign_singular"] = bool(np.all(np.abs(lam[sing] - 1.0) <= SIGN_TOL))
    diag["max_sign_violation"] = float(max(
        np.max(1.0 - lam[closed], initial=0.0), np.max(lam[opened] - 1.0, initial=0.0),
        np.max(np.abs(lam[sing] - 1.0), initial=0.0)))
    checks["y_nonnegative"] = bool(np.all(y >= 0.0)) and not traj.clamped

    y0 = u["y0"]
    slack = 1e-9 * max(1.0, fb.y0_max)
    checks["y0_in_bounds"] = fb.y0_min - slack <= y0 <= fb.y0_max + slack

    if structure is Structure.CONSTANT_MAX:
        checks["costate_below_one"] = u["lam0"] < 1.0 and u["lambar"] < 1.0
    else:
        checks["lam0_above_one"] = u["lam0"] > 1.0
    if structure in (Structure.BANG_BANG, Structure.BANG_SINGULAR_BANG):
        checks["dark_switch_possible"] = u["lambar"] > 1.0 / (sp.r + 1.0)
        t10 = u["t10"]
        checks["times_ordered"] = sp.T_light < t10 < sp.T
    if structure is Structure.BANG_BANG:
        checks["times_ordered"] = checks["times_ordered"] and 0.0 < u["t01"] < sp.T_light
        checks["switch_below_y_sigma"] = u["y01"] < ys
        pre = t <= u["t01"]
        checks["increasing_before_switch"] = bool(np.all(np.diff(y[pre]) > 0.0))
    if structure.is_singular:
        t0s = u["t0s"]
        ts1 = u.get("ts1", sp.T_light)
        order = 0.0 < t0s < ts1 <= sp.T_light
        checks["times_ordered"] = checks.get("times_ordered", True) and order
        on_arc = sing
        k = kelley(y[on_arc], lam[on_arc], sp)
        diag["kelley_min"] = float(np.min(k)) if k.size else math.nan
        checks["kelley"] = bool(k.size == 0 or np.all(k > 0.0))
        diag["singular_dwell"] = float(ts1 - t0s)
    return checks, diag


# residual rows that scale linearly with the biomass level
STATE_ROWS: dict[Structure, tuple[int, ...]] = {
    Structure.BANG_BANG: (1, 3, 4, 6),
    Structure.BANG_SINGULAR_BANG: (1, 3, 4, 6),
    Structure.SINGULAR_TO_DARK: (1, 2),
    Structure.CONSTANT_MAX: (1, 2),
}


def _polish(structure: Structure, x0: np.ndarray, sp: ScaledParams) -> NewtonResult:
    """Newton in log-states on a row-scaled system.

    Near the feasibility line the optimal biomass is tiny and the raw system
    becomes nearly homogeneous in the states: its residual is small for any
    rescaled state and absolute finite differences lose the states entirely.
    Solving for log y and dividing the state rows by ``min(1, y0)`` restores
    relative resolution; the returned residual is the raw one, which the
    scaled tolerance bounds.
    """
    F = RESIDUALS[structure]
    names = UNKNOWNS[structure]
    logs = np.array([n.startswith("y") for n in names])
    rows = list(STATE_ROWS[structure])
    if np.any(x0[logs] <= 0.0):
        return NewtonResult(x0, np.full(len(names), np.nan), math.inf, 0, False, "non-positive state")

    def to_x(z):
        x = z.copy()
        x[logs] = np.exp(z[logs])
        return x

    def G(z):
        x = to_x(z)
        if not np.all(np.isfinite(x)) or np.any(x[logs] == 0.0):
            raise DomainError("state left the representable range")
        f = F(x, sp)
        f[rows] /= min(1.0, x[0])
        if not np.all(np.isfinite(f)):
            raise DomainError("non-finite residual")
        return f

    z0 = x0.astype(float).copy()
    z0[logs] = np.log(x0[logs])
    try:
        with np.errstate(over="ignore", invalid="ignore"):   # trial steps may overshoot
            res = damped_newton(G, z0, tol=RESIDUAL_TOL, max_iter=MAX_ITER)
    except OverflowError as exc:
        return NewtonResult(x0, np.full(len(names), np.nan), math.inf, 0, False, str(exc))
    x = to_x(res.x)
    try:
        raw = F(x, sp)
    except (DomainError, OverflowError) as exc:
        return NewtonResult(x, res.residual, math.inf, res.iterations, False, str(exc))
    norm = float(np.max(np.abs(raw)))
    return NewtonResult(x, raw, norm, res.iterations, res.converged and norm <= RESIDUAL_TOL,
                        res.message)


def _build(structure: Structure, res: NewtonResult, sp: ScaledParams) -> CandidateSolution:
    names = UNKNOWNS[structure]
    u = {k: float(v) for k, v in zip(names, res.x)}
    traj, policy, extra = reconstruct(structure, u, sp)
    checks, diag = validate(structure, u, traj, sp, extra["costate_junction_error"])
    objective = closed_form_objective(structure, u, sp)
    diag["objective_simpson"] = traj.objective
    return CandidateSolution(structure, u, res.norm, objective, traj, policy, checks, diag,
                             iterations=res.iterations)


def _precheck(structure: Structure, sp: ScaledParams) -> None:
    if not an.is_feasible(sp):
        raise InfeasibleError(
            f"mu_bar={sp.mu_bar:.6g} <= r T / T_light={sp.r * sp.T / sp.T_light:.6g}: "
            "no periodic solution with positive biomass")
    if structure.is_singular and not an.singular_admissible(sp):
        raise StructureNotAdmissible(
            f"mu_bar={sp.mu_bar:.6g} > (r+1)^2/r={(sp.r + 1) ** 2 / sp.r:.6g}: u_sigma exceeds 1")


def solve_candidate(structure: Structure, sp: ScaledParams,
                    init: Optional[Mapping[str, float] | Iterable[Mapping[str, float]]] = None
                    ) -> CandidateSolution:
    """Solve one structure's system and return its best valid extremal.

    ``init`` may be a mapping (or several) of unknowns or switch estimates
    (e.g. from :func:`lux.oracle.estimate_switches`); structural seeds are
    always tried afterwards.
    """
    _precheck(structure, sp)
    seeds: list[np.ndarray] = []
    if init is not None:
        inits = [init] if isinstance(init, Mapping) else list(init)
        for item in inits:
            s = seed_from_init(structure, item, sp)
            if s is not None:
                seeds.append(s)
    seeds.extend(seeds_for(structure, sp))
    if not seeds:
        raise NonConvergence(f"{structure.value}: no admissible starting point")

    found: list[CandidateSolution] = []
    rejected: list[CandidateSolution] = []
    best_norm = math.inf
    for x0 in seeds:
        res = _polish(structure, x0, sp)
        best_norm = min(best_norm, res.norm)
        if not res.converged:
            continue
        if any(np.allclose(res.x, c_x, rtol=1e-7, atol=1e-9)
               for c_x in (np.array(list(c.unknowns.values())) for c in found + rejected)):
            continue
        cand = _build(structure, res, sp)
        (found if cand.valid else rejected).append(cand)
    if found:
        return max(found, key=lambda c: c.objective)
    if rejected:
        c = max(rejected, key=lambda c: c.objective)
        raise InvariantViolation(
            f"{structure.value}: converged point fails {', '.join(c.failed_checks())}", c)
    raise NonConvergence(
        f"{structure.value}: Newton failed from {len(seeds)} seeds (best residual {best_norm:.3g})")


def best_solution(sp: ScaledParams, structures: Optional[Iterable[Structure]] = None,
                  init: Optional[Mapping[str, float] | Iterable[Mapping[str, float]]] = None
                  ) -> CandidateSolution:
    """Highest-objective valid candidate over all structures; attempts are attached."""
    if not an.is_feasible(sp):
        _precheck(Structure.BANG_BANG, sp)
    structures = list(structures) if structures is not None else list(Structure)
    attempts: list[Attempt] = []
    winners: list[CandidateSolution] = []
    for s in structures:
        try:
            c = solve_candidate(s, sp, init=init)
        except StructureNotAdmissible as exc:
            attempts.append(Attempt(s, "not_admissible", message=str(exc)))
        except InvariantViolation as exc:
            c = exc.candidate
            attempts.append(Attempt(s, "invalid", c.objective, c.residual_norm, str(exc)))
        except NonConvergence as exc:
            attempts.append(Attempt(s, "no_convergence", message=str(exc)))
        else:
            attempts.append(Attempt(s, "valid", c.objective, c.residual_norm))
            winners.append(c)
    if not winners:
        raise NoCandidate("no structure produced a valid extremal", tuple(attempts))
    top = max(c.objective for c in winners)
    tied = [c for c in winners if c.objective >= top - TIE_TOL]
    best = min(tied, key=lambda c: c.structure.n_arcs)
    return CandidateSolution(best.structure, best.unknowns, best.residual_norm, best.objective,
                             best.trajectory, best.policy, best.checks, best.diagnostics,
                             best.iterations, tuple(attempts))
