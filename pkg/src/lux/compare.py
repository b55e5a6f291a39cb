"""Beer-Lambert growth versus its saturating stand-in under one harvesting policy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import (FitResult, LightKind, LightSchedule, ParameterError, PhysicalParams,
                    default_fit_range, fit_simplified, rhs_ln_reduced, rhs_simplified)

Rhs = Callable[[float, float, float, PhysicalParams, LightSchedule], float]
Dilution = Callable[[float], float]


@dataclass(frozen=True)
class ModelComparison:
    fit: FitResult
    x0: float
    t: np.ndarray            # calendar time (days)
    x_reference: np.ndarray  # Beer-Lambert model
    x_simplified: np.ndarray
    max_rel_dev: float
    max_rel_dev_light: float
    max_rel_dev_dark: float
    rhs_dev_light: float     # max relative gap of the growth terms along the reference path
    rhs_dev_dark: float      # absolute gap in the dark (both growth terms vanish)
    threshold: float

    @property
    def within_threshold(self) -> bool:
        return self.max_rel_dev <= self.threshold

    def summary(self) -> dict[str, float | bool]:
        return {"nu_bar": self.fit.nu_bar, "kappa": self.fit.kappa,
                "fit_max_rel_error": self.fit.max_rel_error, "x0": self.x0,
                "max_rel_dev": self.max_rel_dev, "max_rel_dev_light": self.max_rel_dev_light,
                "max_rel_dev_dark": self.max_rel_dev_dark, "rhs_dev_light": self.rhs_dev_light,
                "rhs_dev_dark": self.rhs_dev_dark, "threshold": self.threshold,
                "within_threshold": self.within_threshold}


def _rk4(rhs: Rhs, p: PhysicalParams, schedule: LightSchedule, D: Dilution, x0: float,
         t: np.ndarray) -> np.ndarray:
    x = np.empty(t.size)
    x[0] = x0
    for i in range(t.size - 1):
        a, h = t[i], t[i + 1] - t[i]
        Di = D(a + 0.5 * h)   # dilution held on each step; steps never straddle a cut
        xi = x[i]
        k1 = rhs(a, xi, Di, p, schedule)
        k2 = rhs(a + 0.5 * h, xi + 0.5 * h * k1, Di, p, schedule)
        k3 = rhs(a + 0.5 * h, xi + 0.5 * h * k2, Di, p, schedule)
        # one ulp inside the step, so a step schedule is not sampled in the next phase
        k4 = rhs(math.nextafter(a + h, a), xi + h * k3, Di, p, schedule)
        x[i + 1] = max(xi + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), 0.0)
    return x


def time_grid(p: PhysicalParams, n_per_phase: int = 2000, cuts=()) -> np.ndarray:
    edges = sorted({0.0, p.T_light, p.T_cal, *[c for c in cuts if 0.0 < c < p.T_cal]})
    parts = [np.linspace(a, b, max(2, round(n_per_phase * (b - a) / p.T_light)) + 1)[:-1]
             for a, b in zip(edges, edges[1:])]
    return np.append(np.concatenate(parts), p.T_cal)


def compare_models(p: PhysicalParams, y_range: Optional[tuple[float, float]] = None,
                   dilution: Optional[Dilution] = None, x0: Optional[float] = None,
                   threshold: float = 0.05, kind: LightKind = LightKind.STEP,
                   reference: Rhs = rhs_ln_reduced, n_per_phase: int = 2000,
                   cuts=()) -> ModelComparison:
    """Fit the saturating law, then simulate both laws over one day from ``x0``.

    ``dilution`` maps calendar time to D (default: no harvest); ``cuts`` lists
    its discontinuities so that no RK4 step straddles one. Deviations are
    relative to the reference path and reported overall and per light phase.
    The report is informational: exceeding ``threshold`` is not an error.
    """
    y_range = y_range or default_fit_range(p)
    fit = fit_simplified(p, y_range, threshold=threshold, report_only=True)
    ps = fit.apply(p)
    schedule = LightSchedule.from_params(p, kind)
    D = dilution or (lambda tau: 0.0)
    x0 = x0 if x0 is not None else math.sqrt(y_range[0] * y_range[1])
    if x0 <= 0:
        raise ParameterError("x0 must be positive")
    t = time_grid(p, n_per_phase, cuts)
    x_ref = _rk4(reference, ps, schedule, D, x0, t)
    x_sim = _rk4(rhs_simplified, ps, schedule, D, x0, t)
    rel = np.abs(x_sim - x_ref) / np.maximum(np.abs(x_ref), 1e-300)

    # the last node is the next dawn; right-hand sides are compared on [0, T_cal)
    tt, xx = t[:-1], x_ref[:-1]
    # growth terms: the right-hand sides without the shared -(rho + D) x
    loss = np.array([(p.rho + D(a)) * x for a, x in zip(tt, xx)])
    g_ref = np.array([reference(a, x, D(a), ps, schedule) for a, x in zip(tt, xx)]) + loss
    g_sim = np.array([rhs_simplified(a, x, D(a), ps, schedule) for a, x in zip(tt, xx)]) + loss
    frel = np.where(g_ref > 0.0, np.abs(g_sim - g_ref) / np.where(g_ref > 0.0, g_ref, 1.0),
                    np.abs(g_sim - g_ref))
    light = np.array([schedule.intensity(a) > 0.0 for a in t])
    light[-1] = light[-2]

    def peak(a: np.ndarray, m: np.ndarray) -> float:
        return float(a[m].max()) if m.any() else 0.0

    return ModelComparison(fit, x0, t, x_ref, x_sim, float(rel.max()), peak(rel, light),
                           peak(rel, ~light), peak(frel, light[:-1]), peak(frel, ~light[:-1]),
                           threshold)
