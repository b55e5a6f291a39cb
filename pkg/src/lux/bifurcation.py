"""Regime map of the optimal periodic harvest over the (nu_bar, rho) plane."""

from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from skimage.measure import find_contours

from .direct import seed_inits
from .model import PhysicalParams, ScaledParams, scale
from .oracle import OracleConfig, ResolutionWarning, dp_optimize, estimate_switches
from .shooting import CandidateSolution, NoCandidate, ShootingError, Structure, best_solution


class RegimeLabel(enum.Enum):
    INFEASIBLE = "infeasible"
    BANG_BANG = "bang_bang"
    BANG_SINGULAR_BANG = "bang_singular_bang"
    SINGULAR_TO_DARK = "singular_to_dark"
    CONSTANT_MAX = "constant_max"
    UNRESOLVED = "unresolved"

    @property
    def singular(self) -> bool:
        return self in (RegimeLabel.BANG_SINGULAR_BANG, RegimeLabel.SINGULAR_TO_DARK)


_FROM_STRUCTURE = {
    Structure.BANG_BANG: RegimeLabel.BANG_BANG,
    Structure.BANG_SINGULAR_BANG: RegimeLabel.BANG_SINGULAR_BANG,
    Structure.SINGULAR_TO_DARK: RegimeLabel.SINGULAR_TO_DARK,
    Structure.CONSTANT_MAX: RegimeLabel.CONSTANT_MAX,
}
LABEL_CODES = {lab: i for i, lab in enumerate(RegimeLabel)}


@dataclass(frozen=True)
class FixedParams:
    """Parameters held fixed across the plane (time in days)."""

    D_max: float = 12.0
    kappa: float = 1.0
    T_cal: float = 1.0
    T_light: float = 0.5

    @classmethod
    def from_physical(cls, p: PhysicalParams) -> "FixedParams":
        return cls(D_max=p.D_max, kappa=p.kappa if p.kappa is not None else 1.0,
                   T_cal=p.T_cal, T_light=p.T_light)

    def feasibility_nu(self, rho: float) -> float:
        """nu_bar on the feasibility line for this rho."""
        return self.kappa * rho * self.T_cal / self.T_light

    def singular_nu(self, rho: float) -> float:
        """nu_bar above which no singular arc is admissible."""
        return self.kappa * (rho + self.D_max) ** 2 / rho

    def scaled(self, nu_bar: float, rho: float) -> ScaledParams:
        return scale(PhysicalParams(nu_bar=nu_bar, kappa=self.kappa, rho=rho, D_max=self.D_max,
                                    T_cal=self.T_cal, T_light=self.T_light))


@dataclass(frozen=True)
class CellResult:
    nu_bar: float
    rho: float
    label: RegimeLabel
    objective: float = math.nan
    y0: float = math.nan
    residual_norm: float = math.nan
    retried: bool = False
    note: str = ""
    solution: Optional[CandidateSolution] = field(default=None, compare=False, repr=False)


def classify(nu_bar: float, rho: float, fixed: FixedParams = FixedParams(),
             init: Optional[Mapping[str, float]] = None, oracle_retry: bool = True,
             oracle_cfg: Optional[OracleConfig] = None) -> CellResult:
    """Label one parameter point.

    Points on or below the feasibility line are labelled from the closed-form
    condition alone. A point where no structure converges gets one more try
    seeded from the DP oracle (raw and directly refined switch estimates)
    before it is reported as unresolved.
    """
    if nu_bar <= 0 or rho <= 0:
        raise ValueError("nu_bar and rho must be positive")
    if nu_bar <= fixed.feasibility_nu(rho):
        return CellResult(nu_bar, rho, RegimeLabel.INFEASIBLE)
    sp = fixed.scaled(nu_bar, rho)
    try:
        sol = best_solution(sp, init=init)
        retried = False
    except NoCandidate as exc:
        if not oracle_retry:
            return CellResult(nu_bar, rho, RegimeLabel.UNRESOLVED, note=str(exc))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ResolutionWarning)
            est = estimate_switches(dp_optimize(sp, oracle_cfg))
        try:
            sol = best_solution(sp, init=seed_inits(est, sp))
            retried = True
        except ShootingError as exc2:
            return CellResult(nu_bar, rho, RegimeLabel.UNRESOLVED, retried=True, note=str(exc2))
    return CellResult(nu_bar, rho, _FROM_STRUCTURE[sol.structure], sol.objective, sol.y0,
                      sol.residual_norm, retried, solution=sol)


@dataclass(frozen=True)
class BifurcationGrid:
    nu: np.ndarray    # column axis
    rho: np.ndarray   # row axis
    cells: tuple[tuple[CellResult, ...], ...]   # cells[i][j] at (rho[i], nu[j])
    fixed: FixedParams
    boundaries: dict[str, list[np.ndarray]] = field(default_factory=dict)
    suspects: tuple[tuple[int, int], ...] = ()
    audit: dict[str, object] = field(default_factory=dict)

    def labels(self) -> np.ndarray:
        return np.array([[c.label for c in row] for row in self.cells], dtype=object)

    def codes(self) -> np.ndarray:
        return np.array([[LABEL_CODES[c.label] for c in row] for row in self.cells])

    def flat(self) -> list[CellResult]:
        return [c for row in self.cells for c in row]


def parse_range(text: str) -> tuple[float, float, int]:
    """``"a:b:n"`` -> (a, b, n)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"range must look like a:b:n, got {text!r}")
    a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    if n < 1 or (n > 1 and not b > a):
        raise ValueError(f"range {text!r} needs b > a and n >= 1")
    return a, b, n


def _axis(a: float, b: float, n: int) -> np.ndarray:
    return np.linspace(a, b, n) if n > 1 else np.array([a])


def _index_to_value(axis: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.interp(idx, np.arange(axis.size), axis)


def boundary_polylines(nu: np.ndarray, rho: np.ndarray, mask: np.ndarray) -> list[np.ndarray]:
    """Marching-squares outline of ``mask`` as (nu, rho) polylines."""
    if mask.all() or not mask.any() or min(mask.shape) < 2:
        return []
    out = []
    for c in find_contours(mask.astype(float), 0.5):
        out.append(np.column_stack([_index_to_value(nu, c[:, 1]), _index_to_value(rho, c[:, 0])]))
    return out


def suspect_cells(codes: np.ndarray) -> list[tuple[int, int]]:
    """Cells whose in-grid 4-neighbours all share one label different from theirs."""
    n_i, n_j = codes.shape
    out = []
    for i in range(n_i):
        for j in range(n_j):
            nb = [codes[a, b] for a, b in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1))
                  if 0 <= a < n_i and 0 <= b < n_j]
            if len(nb) >= 2 and len(set(nb)) == 1 and nb[0] != codes[i, j]:
                out.append((i, j))
    return out


def _classify_cold(args):
    nu, rho, fixed = args
    return classify(nu, rho, fixed)


def _warm_init(cell: Optional[CellResult]) -> Optional[dict[str, float]]:
    if cell is None or cell.solution is None:
        return None
    return dict(cell.solution.unknowns)


def scan(nu_range: tuple[float, float, int] = (5.0, 80.0, 20),
         rho_range: tuple[float, float, int] = (1.0, 14.0, 20),
         fixed: FixedParams = FixedParams(), warm_start: bool = True, workers: int = 1,
         audit: int = 5) -> BifurcationGrid:
    """Classify every cell of the grid.

    Serial scans sweep rows in order of increasing rho and warm-start each
    cell from its left (or lower) converged neighbour; the structural seeds
    are always tried as well, so a warm start can only add candidates. With
    ``workers > 1`` cells are solved cold in a process pool. ``audit`` cells,
    spread evenly over the feasible ones, are re-solved cold and compared.
    """
    nu = _axis(*nu_range)
    rho = _axis(*rho_range)
    n_i, n_j = rho.size, nu.size
    if workers > 1:
        jobs = [(float(nu[j]), float(rho[i]), fixed) for i in range(n_i) for j in range(n_j)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            flat = list(pool.map(_classify_cold, jobs))
        rows = [flat[i * n_j:(i + 1) * n_j] for i in range(n_i)]
    else:
        rows = []
        for i in range(n_i):
            row: list[CellResult] = []
            for j in range(n_j):
                nb = row[-1] if row else (rows[-1][j] if rows else None)
                init = _warm_init(nb) if warm_start else None
                row.append(classify(float(nu[j]), float(rho[i]), fixed, init=init))
            rows.append(row)
    cells = tuple(tuple(r) for r in rows)

    codes = np.array([[LABEL_CODES[c.label] for c in r] for r in cells])
    labels = np.array([[c.label for c in r] for r in cells], dtype=object)
    bounds: dict[str, list[np.ndarray]] = {}
    for lab in RegimeLabel:
        polys = boundary_polylines(nu, rho, labels == lab)
        if polys:
            bounds[lab.value] = polys
    sing = np.vectorize(lambda lab: lab.singular)(labels).astype(bool)
    polys = boundary_polylines(nu, rho, sing)
    if polys:
        bounds["singular"] = polys

    report = audit_warm_start(cells, fixed, audit) if (warm_start and workers <= 1 and audit) else {}
    return BifurcationGrid(nu, rho, cells, fixed, bounds, tuple(suspect_cells(codes)), report)


def audit_warm_start(cells: Sequence[Sequence[CellResult]], fixed: FixedParams,
                     n: int) -> dict[str, object]:
    """Re-solve ``n`` feasible cells without warm start and compare."""
    feasible = [c for row in cells for c in row if c.label is not RegimeLabel.INFEASIBLE]
    if not feasible:
        return {"checked": 0, "mismatches": []}
    picks = [feasible[k] for k in np.unique(np.linspace(0, len(feasible) - 1, n).astype(int))]
    mismatches = []
    for c in picks:
        cold = classify(c.nu_bar, c.rho, fixed)
        same = cold.label is c.label and (
            (math.isnan(cold.objective) and math.isnan(c.objective))
            or math.isclose(cold.objective, c.objective, rel_tol=1e-9, abs_tol=1e-12))
        if not same:
            mismatches.append({"nu_bar": c.nu_bar, "rho": c.rho, "warm": c.label.value,
                               "cold": cold.label.value})
    return {"checked": len(picks), "mismatches": mismatches}


def region_e_threshold(rho: float, fixed: FixedParams = FixedParams(),
                       nu_start: Optional[float] = None, rtol: float = 1e-3,
                       nu_limit: float = 1e9) -> Optional[float]:
    """Smallest nu_bar (to ``rtol``) at which u = 1 throughout becomes optimal.

    Grows nu_bar geometrically from ``nu_start`` until the constant control
    wins, then bisects in log nu_bar. Returns None if it never wins below
    ``nu_limit``. Assumes a single crossing along the ray.
    """
    def wins(nu: float) -> bool:
        return classify(nu, rho, fixed, oracle_retry=False).label is RegimeLabel.CONSTANT_MAX

    lo = nu_start if nu_start is not None else 2.0 * fixed.singular_nu(rho)
    if wins(lo):
        return lo
    hi = lo * 4.0
    while not wins(hi):
        lo, hi = hi, hi * 4.0
        if hi > nu_limit:
            return None
    while hi / lo > 1.0 + rtol:
        mid = math.sqrt(lo * hi)
        if wins(mid):
            hi = mid
        else:
            lo = mid
    return hi
