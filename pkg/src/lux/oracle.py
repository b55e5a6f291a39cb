"""Discretized dynamic-programming oracle for the periodic harvesting problem.

This is an independent route to the optimum: no maximum principle, no closed
forms. The period is cut into ``n_time`` steps (the light/dark boundary falls
on a step edge), the state into ``n_state`` geometrically spaced nodes, and
the control into a finite set of levels. Per-step transition maps come from
RK4 sub-steps. For each candidate initial state ``y0`` the terminal value is
``-penalty * |y(T) - y0|`` and value iteration runs backward with linear
interpolation in ``y``; every ``y0`` in the scan is handled in one vectorized
sweep. The best ``y0`` is then re-solved alone, keeping its value functions,
and rolled out greedily from the exact (off-grid) state.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sps
from scipy.optimize import minimize_scalar

from . import analytic as an
from .model import ControlPolicy, Mode, ParameterError, ScaledParams, Segment, Trajectory
from .shooting import Structure

CHATTER_STEPS = 5
SINGULAR_MATCH = 1e-12


class ResolutionWarning(UserWarning):
    """The greedy control flips faster than the grid can resolve (a discretized singular arc)."""


@dataclass(frozen=True)
class OracleConfig:
    n_time: int = 2000
    n_state: int = 800
    y_grid_max: Optional[float] = None  # default 1.2 (mu_bar - r) / r
    n_uniform_u: int = 21
    periodicity_penalty: float = 50.0
    n_y0: int = 64
    substeps: int = 4
    method: str = "price"         # or "penalty"
    orbit_iterations: int = 50
    orbit_tol: float = 1e-10
    grid_floor: float = 0.25      # lowest node as a fraction of the smallest scanned y0

    def __post_init__(self) -> None:
        if self.n_time < 2 or self.n_state < 2 or self.n_y0 < 1 or self.substeps < 1:
            raise ParameterError("oracle grid sizes must be positive (n_time, n_state >= 2)")
        if self.n_uniform_u < 2:
            raise ParameterError("need at least the levels 0 and 1")
        if self.periodicity_penalty < 0:
            raise ParameterError("periodicity_penalty must be non-negative")
        if self.method not in ("price", "penalty"):
            raise ParameterError(f"unknown oracle method {self.method!r}")

    def y_max(self, sp: ScaledParams) -> float:
        cap = (sp.mu_bar - sp.r) / sp.r
        if self.y_grid_max is None:
            return 1.2 * cap
        if self.y_grid_max < cap:
            raise ParameterError(f"y_grid_max={self.y_grid_max} below the carrying capacity {cap}")
        return float(self.y_grid_max)

    def u_levels(self, sp: ScaledParams) -> np.ndarray:
        levels = set(np.linspace(0.0, 1.0, self.n_uniform_u).tolist())
        if an.singular_admissible(sp):
            levels.add(an.u_sigma(sp))
        return np.array(sorted(levels))

    def y0_scan(self, sp: ScaledParams) -> np.ndarray:
        lo, hi = an.y0_min(sp), an.y0_max(sp)
        if hi <= 0.0:
            # infeasible: scan a nominal window so the oracle still reports a value
            hi = 0.1 * (sp.mu_bar / sp.r)
        return np.linspace(lo, hi, self.n_y0 + 2)[1:-1] if lo == 0.0 else np.linspace(lo, hi, self.n_y0)

    def state_grid(self, sp: ScaledParams) -> np.ndarray:
        y_top = self.y_max(sp)
        scan = self.y0_scan(sp)
        # periodic paths bottom out near their initial state; lower states are clamped
        grid = np.geomspace(self.grid_floor * scan[0], y_top, self.n_state)
        if an.singular_admissible(sp):
            # the singular level as an exact node: holding it costs no interpolation
            ys = an.y_sigma(sp)
            k = int(np.argmin(np.abs(np.log(grid / ys))))
            if 0 < k < grid.size - 1:
                grid[k] = ys
        return grid


@dataclass(frozen=True)
class OracleResult:
    objective: float      # penalized value of the rolled-out policy
    dp_value: float       # grid value at the selected scan point (dual value for "price")
    harvest: float
    y0_star: float
    policy: ControlPolicy
    trajectory: Trajectory
    u_steps: np.ndarray   # control applied on each time step
    t_edges: np.ndarray
    chatter: bool
    u_sigma: Optional[float]
    dt: float             # light-phase step, the time resolution quoted for switch estimates
    price: float = math.nan  # terminal price of the periodicity constraint ("price" method)

    @property
    def period_gap(self) -> float:
        return abs(float(self.trajectory.y[-1]) - self.y0_star)


def _step_map(y: np.ndarray, u: np.ndarray, mu: float, r: float, dt: float, m: int):
    """RK4 over ``dt`` in ``m`` sub-steps for ``y`` and ``int y``; broadcasts ``y`` against ``u``."""
    h = dt / m
    y = np.broadcast_to(y, np.broadcast(y, u).shape).astype(float)
    z = np.zeros_like(y)

    def f(v):
        return mu * v / (1.0 + v) - (r + u) * v

    for _ in range(m):
        k1 = f(y)
        y2 = y + 0.5 * h * k1
        k2 = f(y2)
        y3 = y + 0.5 * h * k2
        k3 = f(y3)
        y4 = y + h * k3
        k4 = f(y4)
        z = z + h / 6.0 * (y + 2.0 * y2 + 2.0 * y3 + y4)
        y = np.maximum(y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), 0.0)
    return y, z


def _interp_weights(grid: np.ndarray, Y: np.ndarray):
    idx = np.clip(np.searchsorted(grid, Y, side="right") - 1, 0, grid.size - 2)
    w = np.clip((Y - grid[idx]) / (grid[idx + 1] - grid[idx]), 0.0, 1.0)
    return idx, w


@dataclass(frozen=True)
class _Phase:
    n: int
    dt: float
    mu: float
    n_u: int
    reward: np.ndarray   # flattened (n_u * n_state,)
    interp: sps.csr_matrix  # (n_u * n_state, n_state): V -> V at the successor states


def _phases(cfg: OracleConfig, sp: ScaledParams, grid: np.ndarray, levels: np.ndarray):
    n_light = min(max(1, round(cfg.n_time * sp.T_light / sp.T)), cfg.n_time - 1)
    out = []
    m = grid.size
    for n, length, mu in ((n_light, sp.T_light, sp.mu_bar), (cfg.n_time - n_light, sp.T_dark, 0.0)):
        dt = length / n
        Y, Z = _step_map(grid[None, :], levels[:, None], mu, sp.r, dt, cfg.substeps)
        idx, w = _interp_weights(grid, Y.ravel())
        rows = np.repeat(np.arange(idx.size), 2)
        cols = np.column_stack([idx, idx + 1]).ravel()
        vals = np.column_stack([1.0 - w, w]).ravel()
        M = sps.csr_matrix((vals, (rows, cols)), shape=(idx.size, m))
        out.append(_Phase(n, dt, mu, levels.size, (levels[:, None] * Z).ravel(), M))
    return out


def _backup(V: np.ndarray, ph: _Phase) -> np.ndarray:
    """One Bellman step for a stack of value functions ``V`` (n_stack, n_state)."""
    m = V.shape[1]
    if V.shape[0] == 1:
        Q = ph.interp @ V[0] + ph.reward
        return Q.reshape(ph.n_u, m).max(axis=0)[None, :]
    Q = ph.interp @ V.T + ph.reward[:, None]
    return Q.reshape(ph.n_u, m, V.shape[0]).max(axis=0).T


def _sweep(phases, grid: np.ndarray, terminal: np.ndarray, store: bool = False):
    """Backward value iteration from ``terminal`` (n_stack, n_state)."""
    V = terminal
    history = [V[0]] if store else None
    for ph in reversed(phases):
        for _ in range(ph.n):
            V = _backup(V, ph)
            if store:
                history.append(V[0])
    if store:
        history.reverse()
    return V, history


def _rollout(y0: float, phases, grid: np.ndarray, levels: np.ndarray, history, sp: ScaledParams,
             substeps: int):
    """Greedy forward pass from the exact state using stored value functions."""
    ts, ys, us = [0.0], [y0], []
    y, t, harvest, k = y0, 0.0, 0.0, 0
    for ph in phases:
        for _ in range(ph.n):
            Y, Z = _step_map(np.array([y]), levels, ph.mu, sp.r, ph.dt, substeps)
            q = levels * Z + np.interp(Y, grid, history[k + 1])
            i = int(np.argmax(q))
            harvest += float(levels[i] * Z[i])
            y = float(Y[i])
            t += ph.dt
            k += 1
            ts.append(t)
            ys.append(y)
            us.append(float(levels[i]))
    ts[-1] = sp.T
    return np.array(ts), np.array(ys), np.array(us), harvest


def _price_dual(cfg: OracleConfig, sp: ScaledParams, phases, grid, y0s):
    """Minimise the dual of the periodicity constraint over the terminal price.

    For a price c the terminal value ``c * y`` is smooth, so interpolation
    does not smear it; ``D(c) = max_y0 [W_c(y0) - c y0]`` is convex in c and
    bounds every periodic harvest from above.
    """
    inner = grid[(grid > y0s[0]) & (grid < y0s[-1])]
    cands = np.union1d(y0s, inner)

    def W(c: float) -> np.ndarray:
        V, _ = _sweep(phases, grid, (c * grid)[None, :])
        return np.interp(cands, grid, V[0]) - c * cands

    # a unit of biomass is worth at most what keeps it alive for a whole period,
    # so prices beyond max(penalty, e^{rT}) are never needed; search in log c
    c_max = max(cfg.periodicity_penalty, math.exp(min(sp.r * sp.T, 700.0)))
    res = minimize_scalar(lambda s: float(np.max(W(math.exp(s)))),
                          bounds=(math.log(1e-6), math.log(c_max)), method="bounded",
                          options={"xatol": 1e-8})
    c = math.exp(float(res.x))
    vals = W(c)
    return c, cands, vals


def dp_optimize(sp: ScaledParams, cfg: Optional[OracleConfig] = None) -> OracleResult:
    """Best periodic policy on the grid.

    With ``method="price"`` (default) the periodicity constraint is priced
    (see :func:`_price_dual`) and the greedy closed-loop policy is iterated
    onto its own periodic orbit, so the reported harvest belongs to a genuinely
    periodic control. With ``method="penalty"`` every ``y0`` of the scan gets the
    terminal value ``-penalty * |y(T) - y0|`` instead.

    Ties between initial states are broken toward the smallest ``y0``.
    Emits :class:`ResolutionWarning` when the rolled-out control chatters.
    """
    cfg = cfg or OracleConfig()
    grid = cfg.state_grid(sp)
    levels = cfg.u_levels(sp)
    phases = _phases(cfg, sp, grid, levels)
    y0s = cfg.y0_scan(sp)
    P = cfg.periodicity_penalty

    if cfg.method == "penalty":
        V0, _ = _sweep(phases, grid, -P * np.abs(grid[None, :] - y0s[:, None]))
        values = np.array([np.interp(y, grid, V0[j]) for j, y in enumerate(y0s)])
        j = int(np.argmax(values))  # first maximum = smallest y0
        y0 = float(y0s[j])
        _, history = _sweep(phases, grid, -P * np.abs(grid[None, :] - y0), store=True)
        t_edges, ys, u_steps, harvest = _rollout(y0, phases, grid, levels, history, sp, cfg.substeps)
        price = math.nan
    else:
        price, y0s, values = _price_dual(cfg, sp, phases, grid, y0s)
        j = int(np.argmax(values))
        y0 = float(y0s[j])
        _, history = _sweep(phases, grid, (price * grid)[None, :], store=True)
        tol = cfg.orbit_tol * max(1.0, y0)
        for _ in range(cfg.orbit_iterations):
            t_edges, ys, u_steps, harvest = _rollout(y0, phases, grid, levels, history, sp,
                                                     cfg.substeps)
            if abs(ys[-1] - y0) <= tol:
                break
            y0 = float(ys[-1])
    objective = harvest - P * abs(ys[-1] - y0)

    flips = np.flatnonzero(np.diff(u_steps) != 0.0)
    chatter = bool(np.any(np.diff(flips) <= CHATTER_STEPS))
    if chatter:
        warnings.warn("oracle control chatters on the time grid (discretized singular arc)",
                      ResolutionWarning, stacklevel=2)
    us_sig = an.u_sigma(sp) if an.singular_admissible(sp) else None
    traj = Trajectory(t=t_edges, y=ys, u=np.append(u_steps, u_steps[-1]), objective=harvest)
    return OracleResult(objective, float(values[j]), harvest, y0,
                        _policy_from_steps(t_edges, u_steps, us_sig), traj, u_steps, t_edges,
                        chatter, us_sig, phases[0].dt, price)


def _mode_of(u: float, u_sig: Optional[float]) -> Mode:
    if u == 0.0:
        return Mode.CLOSED
    if u == 1.0:
        return Mode.OPEN
    if u_sig is not None and abs(u - u_sig) <= SINGULAR_MATCH:
        return Mode.SINGULAR
    return Mode.FIXED


def _policy_from_steps(t_edges: np.ndarray, u_steps: np.ndarray,
                       u_sig: Optional[float]) -> ControlPolicy:
    cuts = [0, *(np.flatnonzero(np.diff(u_steps) != 0.0) + 1).tolist(), u_steps.size]
    segs = tuple(Segment(float(t_edges[a]), float(t_edges[b]), _mode_of(float(u_steps[a]), u_sig),
                         float(u_steps[a])) for a, b in zip(cuts, cuts[1:]))
    return ControlPolicy(segs)


# switch extraction -----------------------------------------------------------

@dataclass(frozen=True)
class SwitchEstimate:
    """Arc pattern read off an oracle policy, usable as ``init`` for the shooting solver.

    ``intervals`` holds, per switch, the time band over which the oracle
    control changes from one main arc to the next (a single instant for a
    clean switch); ``switches`` holds the band midpoints. After refinement
    (:func:`lux.direct.refine_switches`) the DP bands move to
    ``raw_intervals``.
    """

    structure: Optional[Structure]
    pattern: tuple[str, ...]          # "0", "1" or "s" per main arc
    switches: dict[str, float]
    intervals: dict[str, tuple[float, float]]
    y0: float
    raw_intervals: dict[str, tuple[float, float]] = field(default_factory=dict)
    harvest: Optional[float] = None   # set by lux.direct.refine_switches

    @property
    def init(self) -> dict[str, float]:
        return {"y0": self.y0, **self.switches}


def _step_labels(u_steps: np.ndarray) -> np.ndarray:
    lab = np.full(u_steps.size, "s", dtype="<U1")
    lab[u_steps == 0.0] = "0"
    lab[u_steps == 1.0] = "1"
    return lab


def collapse_chatter(labels: np.ndarray, window: int = CHATTER_STEPS,
                     min_run: Optional[int] = None) -> np.ndarray:
    """Merge runs of label flips closer than ``window`` steps.

    A band of at least ``min_run`` steps alternating only between the bounds
    is a discretised singular dwell (``"s"``). Any other band, in particular
    one mixing interior levels with a bound, marks a transition (``"c"``).
    """
    labels = labels.copy()
    min_run = min_run if min_run is not None else 4 * window
    flips = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    if flips.size < 2:
        return labels
    group = [flips[0]]
    for f in list(flips[1:]) + [None]:
        if f is not None and f - group[-1] <= window:
            group.append(f)
            continue
        if len(group) >= 2:
            band = labels[group[0] - 1:group[-1]]
            dwell = group[-1] - group[0] >= min_run and not np.any(band == "s")
            labels[group[0]:group[-1]] = "s" if dwell else "c"
        if f is not None:
            group = [f]
    return labels


def _runs(labels: np.ndarray) -> list[tuple[str, int, int]]:
    cuts = [0, *(np.flatnonzero(labels[1:] != labels[:-1]) + 1).tolist(), labels.size]
    return [(str(labels[a]), a, b) for a, b in zip(cuts, cuts[1:])]


_PATTERNS = {
    ("0", "1", "0"): (Structure.BANG_BANG, ("t01", "t10")),
    ("0", "s", "1", "0"): (Structure.BANG_SINGULAR_BANG, ("t0s", "ts1", "t10")),
    ("0", "s", "0"): (Structure.SINGULAR_TO_DARK, ("t0s", "ts_dark")),
    ("1",): (Structure.CONSTANT_MAX, ()),
}


def estimate_switches(result: OracleResult, window: int = CHATTER_STEPS,
                      min_run: Optional[int] = None) -> SwitchEstimate:
    """Switch-time estimates from the rolled-out oracle policy.

    Chatter is collapsed first (see :func:`collapse_chatter`). Runs of at
    least ``min_run`` steps are the
    main arcs; shorter runs between two main arcs form the transition band of
    that switch (or vanish if both neighbours carry the same label). The main
    arc pattern closed/open/closed seeds the bang-bang system (``t01``,
    ``t10``), closed/singular/open/closed the bang-singular-bang system
    (``t0s``, ``ts1``, ``t10``), closed/singular/closed the singular-to-dark
    system (``t0s``), and a constant u = 1 the constant-control system (no
    switches). Other patterns yield ``structure=None`` with generic names.
    """
    n = result.u_steps.size
    min_run = min_run if min_run is not None else max(4 * window, n // 100)
    runs = _runs(collapse_chatter(_step_labels(result.u_steps), window, min_run))
    major = [r for r in runs if r[2] - r[1] >= min_run and r[0] != "c"]
    major = major or [max(runs, key=lambda r: r[2] - r[1])]
    # merge neighbouring main arcs that carry the same label
    merged: list[list] = []
    for lab, a, b in major:
        if merged and merged[-1][0] == lab:
            merged[-1][2] = b
        else:
            merged.append([lab, a, b])
    t = result.t_edges
    bands = [(float(t[prev[2]]), float(t[nxt[1]])) for prev, nxt in zip(merged, merged[1:])]
    pattern = tuple(m[0] for m in merged)
    structure, names = _PATTERNS.get(pattern, (None, ()))
    if structure is None:
        names = tuple(f"s{i}" for i in range(len(bands)))
    intervals = dict(zip(names, bands))
    intervals.pop("ts_dark", None)
    switches = {k: 0.5 * (lo + hi) for k, (lo, hi) in intervals.items()}
    return SwitchEstimate(structure, pattern, switches, intervals, result.y0_star)
