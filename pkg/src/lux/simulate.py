"""Fixed-step RK4 simulation of the scaled model over one period.

Steps never straddle a discontinuity: the period is cut at every control
switch and at the end of the light phase, and each piece gets its own
uniform grid (with an even number of steps so Simpson's rule applies).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import ControlPolicy, LightSchedule, ScaledParams, Trajectory


@dataclass(frozen=True)
class Arc:
    """A time interval on which growth coefficient and control are constant."""

    t0: float
    t1: float
    mu: float
    u: float


def arcs_for(policy: ControlPolicy, sp: ScaledParams) -> list[Arc]:
    cuts = sorted({0.0, sp.T_light, sp.T, *policy.boundaries})
    cuts = [c for c in cuts if 0.0 <= c <= sp.T]
    arcs = []
    for a, b in zip(cuts, cuts[1:]):
        if b - a <= 0.0:
            continue
        mid = 0.5 * (a + b)
        arcs.append(Arc(a, b, sp.mu(mid), policy.u_at(mid)))
    return arcs


def _state_rate(y: float, mu: float, u: float, r: float) -> float:
    return mu * y / (1.0 + y) - r * y - u * y


def _costate_rate(y: float, lam: float, mu: float, u: float, r: float) -> float:
    return lam * (-mu / (1.0 + y) ** 2 + r + u) - u


def _steps(arc: Arc, step: float) -> int:
    n = max(2, math.ceil((arc.t1 - arc.t0) / step - 1e-9))
    return n + (n % 2)


def integrate_arcs(arcs: Sequence[Arc], y0: float, r: float, step: float,
                   lam0: Optional[float] = None):
    """RK4 through consecutive arcs.

    Returns ``(t, y, u, lam, harvest)`` where each array holds one sample per
    grid node (shared nodes at arc joins appear once, carrying the control of
    the arc that starts there) and ``harvest`` is the Simpson integral of
    ``u y``. ``lam`` is ``None`` unless ``lam0`` is given.
    """
    with_lam = lam0 is not None
    ts, ys, us, ls = [arcs[0].t0], [y0], [arcs[0].u], [lam0 if with_lam else 0.0]
    y, lam = y0, (lam0 if with_lam else 0.0)
    harvest = 0.0
    clamped = False
    for k, arc in enumerate(arcs):
        n = _steps(arc, step)
        h = (arc.t1 - arc.t0) / n
        mu, u = arc.mu, arc.u
        seg_y = [y]
        for i in range(n):
            if with_lam:
                k1y = _state_rate(y, mu, u, r)
                k1l = _costate_rate(y, lam, mu, u, r)
                y2, l2 = y + 0.5 * h * k1y, lam + 0.5 * h * k1l
                k2y = _state_rate(y2, mu, u, r)
                k2l = _costate_rate(y2, l2, mu, u, r)
                y3, l3 = y + 0.5 * h * k2y, lam + 0.5 * h * k2l
                k3y = _state_rate(y3, mu, u, r)
                k3l = _costate_rate(y3, l3, mu, u, r)
                y4, l4 = y + h * k3y, lam + h * k3l
                k4y = _state_rate(y4, mu, u, r)
                k4l = _costate_rate(y4, l4, mu, u, r)
                y = y + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
                lam = lam + h / 6.0 * (k1l + 2 * k2l + 2 * k3l + k4l)
            else:
                k1 = _state_rate(y, mu, u, r)
                k2 = _state_rate(y + 0.5 * h * k1, mu, u, r)
                k3 = _state_rate(y + 0.5 * h * k2, mu, u, r)
                k4 = _state_rate(y + h * k3, mu, u, r)
                y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if y < 0.0:
                y, clamped = 0.0, True
            seg_y.append(y)
            ts.append(arc.t0 + (i + 1) * h if i + 1 < n else arc.t1)
            ys.append(y)
            ls.append(lam)
            us.append(u if (i + 1 < n or k + 1 == len(arcs)) else arcs[k + 1].u)
        seg = np.asarray(seg_y)
        harvest += u * h / 3.0 * (seg[0] + seg[-1] + 4 * seg[1:-1:2].sum() + 2 * seg[2:-1:2].sum())
    lam_arr = np.asarray(ls) if with_lam else None
    return np.asarray(ts), np.asarray(ys), np.asarray(us), lam_arr, harvest, clamped


def hamiltonian(t: np.ndarray, y: np.ndarray, u: np.ndarray, lam: np.ndarray,
                sp: ScaledParams) -> np.ndarray:
    mu = np.where(np.mod(t, sp.T) < sp.T_light, sp.mu_bar, 0.0)
    return lam * (mu * y / (1.0 + y) - sp.r * y - u * y) + u * y


def simulate(policy: ControlPolicy, y0: float, sp: ScaledParams,
             schedule: Optional[LightSchedule] = None, step: Optional[float] = None) -> Trajectory:
    """Forward path of ``policy`` from ``y0``; objective is the Simpson integral of u y."""
    if schedule is not None:
        schedule.require_step()
    if y0 <= 0:
        raise ValueError("y0 must be positive")
    step = step if step is not None else sp.T / 1e4
    if step <= 0:
        raise ValueError("step must be positive")
    t, y, u, _, harvest, clamped = integrate_arcs(arcs_for(policy, sp), y0, sp.r, step)
    return Trajectory(t=t, y=y, u=u, objective=float(harvest), clamped=clamped)


def period_map(y0: float, u: float, sp: ScaledParams, step: Optional[float] = None) -> float:
    """y(T) from y0 under a constant control."""
    return float(simulate(ControlPolicy.constant(u, sp.T), y0, sp, step=step).y[-1])


def uniform_fine(arc: Arc, n: int) -> np.ndarray:
    """``2n + 1`` equispaced times across ``arc`` (even entries are RK4 nodes)."""
    tf = arc.t0 + (arc.t1 - arc.t0) * np.arange(2 * n + 1) / (2 * n)
    tf[-1] = arc.t1
    return tf


def state_fine(arc: Arc, tf: np.ndarray, y_start: float, r: float) -> np.ndarray:
    """RK4 state at the times ``tf``, taking each pair of intervals as one full step.

    ``tf`` has odd length; its odd entries must be midpoints of their neighbours.
    Half steps are used for the state so that the odd entries are available as
    RK4 midpoints to the costate sweep.
    """
    out = np.empty(tf.size)
    y = out[0] = y_start
    mu, u = arc.mu, arc.u
    for i in range(tf.size - 1):
        h = tf[i + 1] - tf[i]
        k1 = _state_rate(y, mu, u, r)
        k2 = _state_rate(y + 0.5 * h * k1, mu, u, r)
        k3 = _state_rate(y + 0.5 * h * k2, mu, u, r)
        k4 = _state_rate(y + h * k3, mu, u, r)
        y = out[i + 1] = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return out


def costate_on_arc(arc: Arc, tf: np.ndarray, y_fine: np.ndarray, r: float, lam_bound: float,
                   forward: bool) -> np.ndarray:
    """RK4 costate at the even entries of ``tf``, started from either end.

    The odd entries of ``y_fine`` serve as the RK4 midpoints, so the state is
    never re-integrated in its unstable direction.
    """
    n = (y_fine.size - 1) // 2
    mu, u = arc.mu, arc.u
    lam = np.empty(n + 1)
    idx = range(n) if forward else range(n, 0, -1)
    lam[0 if forward else n] = l = lam_bound
    for k in idx:
        b = k + 1 if forward else k - 1
        h = tf[2 * b] - tf[2 * k]
        ya, ym, yb = y_fine[2 * k], y_fine[k + b], y_fine[2 * b]
        k1 = _costate_rate(ya, l, mu, u, r)
        k2 = _costate_rate(ym, l + 0.5 * h * k1, mu, u, r)
        k3 = _costate_rate(ym, l + 0.5 * h * k2, mu, u, r)
        k4 = _costate_rate(yb, l + h * k3, mu, u, r)
        l = l + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        lam[b] = l
    return lam


def costate_growth(arc: Arc, y: np.ndarray, r: float) -> np.ndarray:
    """d(lambda')/d(lambda) along the arc; positive where forward integration is unstable."""
    return -arc.mu / (1.0 + y) ** 2 + r + arc.u


def costate_between(arc: Arc, tf: np.ndarray, y_fine: np.ndarray, r: float, lam_start: float,
                    lam_end: float) -> tuple[np.ndarray, float]:
    """Costate on an arc whose two end values are known.

    Integrates forward from the start over the part of the arc where the
    costate equation contracts forward, backward from the end over the rest,
    and returns the path together with the mismatch where the two meet.
    """
    n = (y_fine.size - 1) // 2
    growth = costate_growth(arc, y_fine[::2], r)
    expanding = growth > 0.0
    if not expanding.any():
        k = n
    elif expanding.all():
        k = 0
    else:
        k = int(np.argmax(expanding != expanding[0]))
    lam = np.empty(n + 1)
    if k > 0:
        lam[:k + 1] = costate_on_arc(arc, tf[:2 * k + 1], y_fine[:2 * k + 1], r,
                                     lam_start, forward=True)
    if k < n:
        back = costate_on_arc(arc, tf[2 * k:], y_fine[2 * k:], r, lam_end, forward=False)
        mismatch = abs(back[0] - lam[k]) if k > 0 else abs(back[0] - lam_start)
        lam[k:] = back
        if k > 0:
            lam[k] = 0.5 * (lam[k] + back[0])
    else:
        mismatch = abs(lam[n] - lam_end)
    return lam, float(mismatch)
