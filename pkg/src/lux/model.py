"""Photobioreactor model: parameters, light schedules, dynamics and policies.

Two growth laws live here. The depth-averaged Beer-Lambert law (``growth_ln``)
is the physically derived one; the saturating law ``nu_bar * x / (kappa + x)``
is its simplified stand-in on which every optimal-control solver works, after
the change of variables ``t = D_max * tau``, ``y = x / kappa``, ``u = D / D_max``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq, curve_fit

# a*x*L below this switches growth_ln to its series expansion
SERIES_THRESHOLD = 1e-6


class ParameterError(ValueError):
    """Raised when parameters violate a model invariant."""


class NoGrowthError(ParameterError):
    """Respiration is not weaker than the maximal growth (mu_bar <= r)."""


class FitError(RuntimeError):
    """The saturating law does not approximate the Beer-Lambert growth well enough."""


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional reactor and biology constants (time in days).

    ``nu_bar`` and ``kappa`` may be left as ``None``; they are then obtained by
    :func:`fit_simplified` from the Beer-Lambert constants.
    """

    nu_tilde: float = 1.0
    nu_bar: Optional[float] = None
    kappa: Optional[float] = None
    rho: float = 5.0
    D_max: float = 12.0
    a: float = 1.0
    L_depth: float = 1.0
    I0_bar: float = 1.0
    K_I: float = 1.0
    T_cal: float = 1.0
    T_light: float = 0.5
    V: float = 1.0

    def __post_init__(self) -> None:
        for name in ("nu_tilde", "rho", "D_max", "a", "L_depth", "I0_bar", "K_I",
                     "T_cal", "T_light", "V"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be a positive finite number, got {value!r}")
        for name in ("nu_bar", "kappa"):
            value = getattr(self, name)
            if value is not None and not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be positive when given, got {value!r}")
        if self.T_light >= self.T_cal:
            raise ParameterError(
                f"light phase ({self.T_light}) must be shorter than the day ({self.T_cal})")

    @property
    def is_simplified(self) -> bool:
        return self.nu_bar is not None and self.kappa is not None


@dataclass(frozen=True)
class ScaledParams:
    """Nondimensional problem data shared by all solvers."""

    mu_bar: float
    r: float
    T: float
    T_light: float

    def __post_init__(self) -> None:
        for name in ("mu_bar", "r", "T", "T_light"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be a positive finite number, got {value!r}")
        if self.T_light >= self.T:
            raise ParameterError("T_light must be strictly smaller than T")

    @property
    def T_dark(self) -> float:
        return self.T - self.T_light

    def mu(self, t: float) -> float:
        """Scaled growth coefficient of the step light schedule at time t."""
        return self.mu_bar if (t % self.T) < self.T_light else 0.0


def scale(p: PhysicalParams) -> ScaledParams:
    if not p.is_simplified:
        raise ParameterError("nu_bar and kappa are required; run fit_simplified first")
    mu_bar = p.nu_bar / (p.kappa * p.D_max)
    r = p.rho / p.D_max
    if mu_bar <= r:
        raise NoGrowthError(
            f"respiration must be weaker than maximal growth: mu_bar={mu_bar:.6g} <= r={r:.6g}")
    return ScaledParams(mu_bar=mu_bar, r=r, T=p.D_max * p.T_cal, T_light=p.D_max * p.T_light)


def unscale(sp: ScaledParams, template: PhysicalParams) -> PhysicalParams:
    """Inverse of :func:`scale`, keeping D_max, kappa and the remaining fields of ``template``."""
    if template.kappa is None:
        raise ParameterError("template needs kappa")
    D = template.D_max
    return replace(template, nu_bar=sp.mu_bar * template.kappa * D, rho=sp.r * D,
                   T_cal=sp.T / D, T_light=sp.T_light / D)


class LightKind(enum.Enum):
    STEP = "step"
    SQUARED_SINE = "squared_sine"


@dataclass(frozen=True)
class LightSchedule:
    """Incident light over calendar time; periodic with the day length."""

    kind: LightKind
    I0_bar: float
    T_cal: float
    T_light: float

    @classmethod
    def from_params(cls, p: PhysicalParams, kind: LightKind = LightKind.STEP) -> "LightSchedule":
        return cls(kind, p.I0_bar, p.T_cal, p.T_light)

    def intensity(self, tau: float) -> float:
        if self.kind is LightKind.STEP:
            return self.I0_bar if (tau % self.T_cal) < self.T_light else 0.0
        return self.I0_bar * max(math.sin(2.0 * math.pi * tau / self.T_cal), 0.0) ** 2

    def require_step(self) -> None:
        if self.kind is not LightKind.STEP:
            raise ParameterError("optimal-control solvers only support the step light schedule")


def growth_ln(x: float, I0: float, p: PhysicalParams) -> float:
    """Depth-averaged specific growth rate under Beer-Lambert attenuation.

    Evaluated as ``-log1p(-c * (1 - exp(-s))) / s`` with ``s = a x L`` and
    ``c = I0 / (I0 + K_I)``, which is the closed-form layer average without
    the cancellation of the naive ratio of logarithms.
    """
    if x < 0 or I0 < 0:
        raise ParameterError("biomass and light must be non-negative")
    if I0 == 0.0:
        return 0.0
    c = I0 / (I0 + p.K_I)
    s = p.a * x * p.L_depth
    if s < SERIES_THRESHOLD:
        return p.nu_tilde * (c - 0.5 * s * c * (1.0 - c))
    return p.nu_tilde * (-math.log1p(c * math.expm1(-s)) / s)


def growth_ln_total(x, I0: float, p: PhysicalParams):
    """Volumetric growth ``growth_ln(x) * x`` (vectorised over x)."""
    x = np.asarray(x, dtype=float)
    c = I0 / (I0 + p.K_I)
    return p.nu_tilde / (p.a * p.L_depth) * -np.log1p(c * np.expm1(-p.a * x * p.L_depth))


def rhs_reduced(t: float, y: float, u: float, sp: ScaledParams,
                schedule: Optional[LightSchedule] = None) -> float:
    """Scaled biomass derivative ``mu(t) y / (1 + y) - r y - u y``."""
    if schedule is not None:
        schedule.require_step()
    return sp.mu(t) * y / (1.0 + y) - sp.r * y - u * y


def rhs_ln_reduced(tau: float, x: float, D: float, p: PhysicalParams,
                   schedule: Optional[LightSchedule] = None) -> float:
    """Dimensional biomass derivative with the Beer-Lambert growth law."""
    schedule = schedule or LightSchedule.from_params(p)
    return growth_ln(x, schedule.intensity(tau), p) * x - p.rho * x - D * x


def rhs_simplified(tau: float, x: float, D: float, p: PhysicalParams,
                   schedule: Optional[LightSchedule] = None) -> float:
    """Dimensional biomass derivative with the saturating growth law.

    Under the squared-sine schedule the growth coefficient is modulated by
    the relative intensity, so both laws see the same light history.
    """
    schedule = schedule or LightSchedule.from_params(p)
    light = schedule.intensity(tau) / p.I0_bar
    return p.nu_bar * light * x / (p.kappa + x) - p.rho * x - D * x


@dataclass(frozen=True)
class FitResult:
    nu_bar: float
    kappa: float
    max_rel_error: float
    degenerate: bool = False

    def apply(self, p: PhysicalParams) -> PhysicalParams:
        return replace(p, nu_bar=self.nu_bar, kappa=self.kappa)


def default_fit_range(p: PhysicalParams) -> tuple[float, float]:
    """Biomass window (g/L) for the saturating fit, up to the light-phase capacity.

    The capacity solves ``growth_ln(x) = rho``; without one (growth never beats
    respiration) a window of optical depths 1e-3..10 is used.
    """
    c = p.I0_bar / (p.I0_bar + p.K_I)
    depth = p.a * p.L_depth
    if p.nu_tilde * c <= p.rho:
        return 1e-3 / depth, 10.0 / depth
    x_cap = brentq(lambda x: growth_ln(x, p.I0_bar, p) - p.rho, 1e-12 / depth, 1e12 / depth)
    return 1e-2 * x_cap, x_cap


def fit_simplified(p: PhysicalParams, y_range: tuple[float, float], n: int = 400,
                   threshold: float = 0.05, report_only: bool = True) -> FitResult:
    """Least-squares fit of ``nu_bar x / (kappa + x)`` to the Beer-Lambert growth.

    ``y_range`` is a biomass interval (g/L). The returned ``degenerate`` flag
    marks the weak-shading limit where the target is nearly linear and kappa
    runs off to infinity.
    """
    lo, hi = y_range
    if not (0 < lo < hi):
        raise ParameterError("y_range must be a positive interval")
    x = np.linspace(lo, hi, n)
    target = growth_ln_total(x, p.I0_bar, p)
    slope0 = p.nu_tilde * p.I0_bar / (p.I0_bar + p.K_I)
    plateau = target[-1] * 1.5

    def model(xx, log_nu, log_k):
        return np.exp(log_nu) * xx / (np.exp(log_k) + xx)

    guess = (math.log(plateau), math.log(max(plateau / slope0, 1e-6)))
    try:
        # relative weighting: the error criterion is relative too
        (log_nu, log_k), _ = curve_fit(model, x, target, p0=guess, sigma=target, maxfev=20000)
    except RuntimeError as exc:
        raise FitError(f"saturating fit did not converge: {exc}") from exc
    nu_bar, kappa = math.exp(log_nu), math.exp(log_k)
    err = float(np.max(np.abs(model(x, log_nu, log_k) - target) / np.abs(target)))
    res = FitResult(nu_bar, kappa, err, degenerate=kappa > 1e3 * hi)
    if err > threshold and not report_only:
        raise FitError(f"max relative fit error {err:.3%} exceeds threshold {threshold:.1%}")
    return res


class Mode(enum.Enum):
    CLOSED = "closed"        # u = 0
    OPEN = "open"            # u = 1
    SINGULAR = "singular"    # u = u_sigma
    FIXED = "fixed"          # arbitrary constant in [0, 1]


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    mode: Mode
    value: float

    @classmethod
    def closed(cls, t0: float, t1: float) -> "Segment":
        return cls(t0, t1, Mode.CLOSED, 0.0)

    @classmethod
    def open(cls, t0: float, t1: float) -> "Segment":
        return cls(t0, t1, Mode.OPEN, 1.0)

    @classmethod
    def singular(cls, t0: float, t1: float, u_sigma: float) -> "Segment":
        return cls(t0, t1, Mode.SINGULAR, u_sigma)


@dataclass(frozen=True)
class ControlPolicy:
    """Piecewise-constant control over one period."""

    segments: tuple[Segment, ...]
    tol: float = field(default=1e-12, compare=False)

    def __post_init__(self) -> None:
        segs = self.segments
        if not segs:
            raise ParameterError("a policy needs at least one segment")
        if abs(segs[0].t_start) > self.tol:
            raise ParameterError("policy must start at t=0")
        for prev, nxt in zip(segs, segs[1:]):
            if abs(prev.t_end - nxt.t_start) > self.tol:
                raise ParameterError(f"gap or overlap between segments at t={prev.t_end}")
        for s in segs:
            if s.t_end < s.t_start:
                raise ParameterError("segment ends before it starts")
            if not 0.0 <= s.value <= 1.0:
                raise ParameterError(f"control value {s.value} outside [0, 1]")

    @classmethod
    def constant(cls, u: float, T: float) -> "ControlPolicy":
        mode = Mode.CLOSED if u == 0 else Mode.OPEN if u == 1 else Mode.FIXED
        return cls((Segment(0.0, T, mode, float(u)),))

    @classmethod
    def from_switches(cls, modes: Sequence[tuple[Mode, float]], times: Sequence[float],
                      T: float) -> "ControlPolicy":
        """Build from ``len(modes) - 1`` interior switch times; zero-length segments are kept."""
        edges = [0.0, *times, T]
        return cls(tuple(Segment(edges[i], edges[i + 1], m, v) for i, (m, v) in enumerate(modes)))

    @property
    def T(self) -> float:
        return self.segments[-1].t_end

    @property
    def boundaries(self) -> list[float]:
        return [s.t_end for s in self.segments[:-1]]

    def u_at(self, t: float) -> float:
        for s in self.segments:
            if t < s.t_end:
                return s.value
        return self.segments[-1].value

    def describe(self) -> str:
        return " -> ".join(s.mode.value for s in self.segments if s.t_end > s.t_start)


@dataclass(frozen=True)
class Trajectory:
    """Sampled path over one period; ``lam`` and ``H`` are present for PMP solutions."""

    t: np.ndarray
    y: np.ndarray
    u: np.ndarray
    objective: float
    lam: Optional[np.ndarray] = None
    H: Optional[np.ndarray] = None
    clamped: bool = False

    def __post_init__(self) -> None:
        for name in ("t", "y", "u", "lam", "H"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                arr.flags.writeable = False
                object.__setattr__(self, name, arr)
        if np.any(np.diff(self.t) < 0):
            raise ParameterError("trajectory times must be non-decreasing")

    def rows(self, time_scale: float = 1.0):
        lam = self.lam if self.lam is not None else np.full_like(self.t, np.nan)
        H = self.H if self.H is not None else np.full_like(self.t, np.nan)
        for row in zip(self.t * time_scale, self.y, self.u, lam, H):
            yield tuple(float(v) for v in row)
