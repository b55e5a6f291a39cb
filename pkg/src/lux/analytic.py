"""Closed-form quantities of the scaled model.

Everything here works on the autonomous pieces of the dynamics: a light phase
with constant control, where ``dy/dt = mu_bar y/(1+y) - (r+u) y`` separates,
and a dark phase, where state and costate are plain exponentials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import ParameterError, ScaledParams

LOG_GUARD = 1e-12


class DomainError(ValueError):
    """An arc would touch or cross its asymptote (logarithm of a non-positive number)."""


@dataclass(frozen=True)
class EquilibriumSummary:
    mu_bar: float
    r: float
    u_sigma: float
    y_sigma: float
    productivity_opt: float
    saturated: bool

    def y_star(self, u: float) -> float:
        """Light-phase equilibrium under constant dilution u."""
        return self.mu_bar / (self.r + u) - 1.0

    @property
    def u_opt(self) -> float:
        return min(self.u_sigma, 1.0)

    @property
    def productivity_at_u_opt(self) -> float:
        return self.u_opt * self.y_star(self.u_opt)


@dataclass(frozen=True)
class FeasibilityBounds:
    y0_max: float
    y0_min: float
    feasible: bool
    singular_admissible: bool
    carrying_capacity: float


def equilibrium_summary(sp: ScaledParams) -> EquilibriumSummary:
    mu, r = sp.mu_bar, sp.r
    if mu < r:
        raise ParameterError(f"mu_bar={mu} < r={r}: no steady production possible")
    u_sigma = math.sqrt(mu * r) - r
    return EquilibriumSummary(mu, r, u_sigma, y_sigma(sp), (math.sqrt(mu) - math.sqrt(r)) ** 2,
                              saturated=u_sigma > 1.0)


def y_sigma(sp: ScaledParams) -> float:
    return math.sqrt(sp.mu_bar / sp.r) - 1.0


def u_sigma(sp: ScaledParams) -> float:
    return math.sqrt(sp.mu_bar * sp.r) - sp.r


def is_feasible(sp: ScaledParams) -> bool:
    return sp.mu_bar > sp.r * sp.T / sp.T_light


def singular_admissible(sp: ScaledParams) -> bool:
    return sp.mu_bar <= (sp.r + 1.0) ** 2 / sp.r


def _expm1_ratio(A: float, B: float) -> float:
    """expm1(A) / expm1(B) without overflow for large positive A, B."""
    if A > 50.0 and B > 50.0:
        return math.exp(A - B) * (-math.expm1(-A)) / (-math.expm1(-B))
    return math.expm1(A) / math.expm1(B)


def periodic_state(sp: ScaledParams, u: float) -> float:
    """Initial state of the periodic orbit under a constant control u, clamped at 0."""
    mu, rt = sp.mu_bar, sp.r + u
    num = (rt / mu) * (mu * sp.T_light - rt * sp.T)
    if num <= 0.0 or mu == rt:
        return 0.0
    return max((mu - rt) / rt * _expm1_ratio(num, (rt * sp.T / mu) * (mu - rt)), 0.0)


def y0_max(sp: ScaledParams) -> float:
    """Largest periodic initial state (reached with u = 0); 0 when infeasible."""
    return periodic_state(sp, 0.0)


def y0_min(sp: ScaledParams) -> float:
    """Periodic initial state under u = 1, clamped at 0."""
    return periodic_state(sp, 1.0)


def feasibility(sp: ScaledParams) -> FeasibilityBounds:
    return FeasibilityBounds(y0_max(sp), y0_min(sp), is_feasible(sp), singular_admissible(sp),
                             (sp.mu_bar - sp.r) / sp.r)


def light_equilibrium(u: float, sp: ScaledParams) -> float:
    """Light-phase fixed point ``(mu_bar - r - u)/(r + u)``; may be negative."""
    return (sp.mu_bar - sp.r - u) / (sp.r + u)


def _log_args(y_from: float, y_to: float, rt: float, sp: ScaledParams) -> tuple[float, float]:
    if not (0.0 < y_from < math.inf and 0.0 < y_to < math.inf):
        raise DomainError(f"states must be positive and finite (got {y_from}, {y_to})")
    a = sp.mu_bar - rt
    g_from, g_to = a - rt * y_from, a - rt * y_to
    if abs(g_from) < LOG_GUARD or abs(g_to) < LOG_GUARD or (g_from > 0) != (g_to > 0):
        raise DomainError("arc touches or crosses the light-phase equilibrium")
    return g_from, g_to


def light_phase_time(y_from: float, y_to: float, u: float, sp: ScaledParams) -> float:
    """Signed time to go from ``y_from`` to ``y_to`` in the light with constant u.

    Negative values mean ``y_to`` lies upstream of ``y_from``.
    """
    rt = sp.r + u
    a = sp.mu_bar - rt
    g_from, g_to = _log_args(y_from, y_to, rt, sp)
    q = (y_to - y_from) / y_from
    L = math.log1p(q) if q > -0.5 else math.log(y_to) - math.log(y_from)
    if g_from > 0.0:
        # below the equilibrium; a > 0 is bounded away from zero here
        M = math.log1p(rt * (y_from - y_to) / g_from)
        return (rt * L - sp.mu_bar * M) / (rt * a)
    # above the equilibrium: rewrite so that a -> 0 stays well conditioned
    if abs(a) < 1e-14:
        dl_over_a = (1.0 / y_from - 1.0 / y_to) / rt
    else:
        dl_over_a = (math.log1p(-a / (rt * y_to)) - math.log1p(-a / (rt * y_from))) / a
    return -L / rt - sp.mu_bar * dl_over_a / rt


def light_phase_rate(y: float, u: float, sp: ScaledParams) -> float:
    return y * (sp.mu_bar / (1.0 + y) - sp.r - u)


def light_phase_state(y_from: float, dt: float, u: float, sp: ScaledParams,
                      tol: float = 1e-15, max_iter: int = 200) -> float:
    """State reached after ``dt >= 0`` in the light with constant u.

    Inverts :func:`light_phase_time` by Newton steps kept inside a shrinking
    bracket; a step that leaves the bracket is replaced by bisection.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    y_eq = light_equilibrium(u, sp)
    limit = max(y_eq, 0.0)
    if dt == 0.0 or abs(y_from - y_eq) < LOG_GUARD:
        return y_from
    # bracket [near, far]: time is 0 at near and diverges at far
    near, far = y_from, limit
    y = y_from
    for _ in range(max_iter):
        try:
            g = light_phase_time(y_from, y, u, sp) - dt
        except DomainError:
            g = math.inf
        if g < 0:
            near = y
        else:
            far = y
        step = g * light_phase_rate(y, u, sp) if math.isfinite(g) else math.inf
        y_new = y - step
        if not (min(near, far) < y_new < max(near, far)):
            y_new = 0.5 * (near + far)
        if abs(y_new - y) <= tol * max(1.0, abs(y)):
            return y_new
        y = y_new
    return y


def light_arc_integral(y_from: float, y_to: float, u: float, sp: ScaledParams) -> float:
    """Closed-form integral of y over a light arc with constant control u."""
    rt = sp.r + u
    g_from, _ = _log_args(y_from, y_to, rt, sp)
    M = math.log1p(rt * (y_from - y_to) / g_from)
    return -(y_to - y_from) / rt - sp.mu_bar * M / rt ** 2


def dark_phase_map(y: float, u: float, dt: float, sp: ScaledParams) -> float:
    """State after ``dt`` of darkness under constant control u."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return y * math.exp(-(sp.r + u) * dt)


def dark_costate_map(lam: float, u: float, dt: float, sp: ScaledParams) -> float:
    """Costate after ``dt`` of darkness: solves ``dlam/dt = (r+u) lam - u``."""
    rt = sp.r + u
    e = math.exp(rt * dt)
    return lam * e - u * (e - 1.0) / rt


def dark_arc_integral(y: float, u: float, dt: float, sp: ScaledParams) -> float:
    """Integral of y over a dark arc starting at ``y``."""
    rt = sp.r + u
    return y * -math.expm1(-rt * dt) / rt


def net_rate(y: float, sp: ScaledParams) -> float:
    """Light-phase net production ``y (mu_bar/(1+y) - r)``; maximal at y_sigma."""
    return y * (sp.mu_bar / (1.0 + y) - sp.r)


def net_rate_lower_root(c: float, sp: ScaledParams) -> float:
    """The root of ``net_rate(y) = c`` lying below y_sigma (requires c <= net_rate(y_sigma)).

    ``y (mu - r(1+y)) = c (1+y)`` is the quadratic ``r y^2 - (mu - r - c) y + c = 0``.
    """
    r, mu = sp.r, sp.mu_bar
    b = mu - r - c
    disc = b * b - 4.0 * r * c
    if disc < 0:
        if disc < -1e-12 * b * b:
            raise DomainError("net rate level above its maximum")
        disc = 0.0  # rounding at the maximum itself
    sq = math.sqrt(disc)
    # stable smaller root
    if b > 0:
        return 2.0 * c / (b + sq)
    return (b - sq) / (2.0 * r)
