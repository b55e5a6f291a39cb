"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary and also when the module is run as a script.
"""

from __future__ import annotations

import math
import time
import warnings

import numpy as np
import pytest

from lux import analytic as an
from lux.bifurcation import FixedParams, RegimeLabel, classify, scan
from lux.compare import compare_models
from lux.direct import refine_switches
from lux.model import PhysicalParams
from lux.oracle import ResolutionWarning, dp_optimize, estimate_switches
from lux.shooting import kelley, best_solution
from lux.simulate import Arc, integrate_arcs, period_map

from conftest import ACCEPTANCE_LINES, FIG3_NU, fig3_scaled

FIX = FixedParams()
DRAW_SEED = 20240101


def report(name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def random_draws(n: int = 20, seed: int = DRAW_SEED) -> list[tuple[float, float]]:
    """Feasible (nu_bar, rho) over the window of the regime map, 5% clear of the solid line."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        rho = rng.uniform(1.0, 14.0)
        nu = rng.uniform(5.0, 80.0)
        if nu > 1.05 * FIX.feasibility_nu(rho):
            out.append((float(nu), float(rho)))
    return out


@pytest.fixture(scope="module")
def agreement_cases():
    return [(nu, 5.0) for nu in FIG3_NU] + random_draws()


def test_c1_closed_form_fixed_points():
    t0 = time.perf_counter()
    sp = fig3_scaled(36.0)
    fb = an.feasibility(sp)
    d_max = abs(period_map(fb.y0_max, 0.0, sp) - fb.y0_max) / fb.y0_max
    d_min = abs(period_map(fb.y0_min, 1.0, sp) - fb.y0_min) / fb.y0_min
    dt = time.perf_counter() - t0
    ok = d_max <= 1e-8 and d_min <= 1e-8 and dt < 1.0
    report("C1 closed-form fixed points", ok,
           f"rel|dy0_max|={d_max:.1e}, rel|dy0_min|={d_min:.1e} (tol 1e-8), {dt:.2f}s (<1s)")
    assert ok


def test_c2_steady_state_optimum():
    t0 = time.perf_counter()
    sp = fig3_scaled(36.0)
    us = an.u_sigma(sp)
    # constant light: a single light arc long enough to settle on the equilibrium
    _, y, *_ = integrate_arcs([Arc(0.0, 400.0, sp.mu_bar, us)], 0.1, sp.r, 0.01)
    prod = us * y[-1]
    target = (math.sqrt(sp.mu_bar) - math.sqrt(sp.r)) ** 2
    err = abs(prod - target) / target
    dt = time.perf_counter() - t0
    ok = err <= 1e-6 and dt < 1.0
    report("C2 steady-state optimum", ok,
           f"u_sigma*y={prod:.10f} vs (sqrt(mu)-sqrt(r))^2={target:.10f}, rel {err:.1e} "
           f"(tol 1e-6), {dt:.2f}s (<1s)")
    assert ok


def test_c3_pmp_solution_validity():
    t0 = time.perf_counter()
    worst = {"res": 0.0, "per": 0.0, "ham": 0.0}
    failed = []
    for nu in FIG3_NU:
        sol = best_solution(fig3_scaled(nu))
        d = sol.diagnostics
        worst["res"] = max(worst["res"], sol.residual_norm)
        worst["per"] = max(worst["per"], d["periodicity_y"])
        worst["ham"] = max(worst["ham"], d["hamiltonian_spread_light"], d["hamiltonian_spread_dark"])
        signs = all(v for k, v in sol.checks.items() if k.startswith("sign"))
        if not (signs and sol.valid):
            failed.append(f"nu={nu:g}:{sol.failed_checks()}")
    dt = time.perf_counter() - t0
    ok = (worst["res"] <= 1e-10 and worst["per"] <= 1e-8 and worst["ham"] <= 1e-6
          and not failed and dt < 10.0)
    report("C3 PMP solution validity", ok,
           f"max residual {worst['res']:.1e} (<=1e-10), periodicity {worst['per']:.1e} (<=1e-8), "
           f"H spread {worst['ham']:.1e} (<=1e-6), sign failures {failed or 'none'}, {dt:.1f}s (<10s)")
    assert ok


def test_c4_oracle_agreement(agreement_cases):
    t0 = time.perf_counter()
    worst_obj, worst_steps, worst_raw = 0.0, 0.0, 0.0
    bad = []
    for nu, rho in agreement_cases:
        sp = FIX.scaled(nu, rho)
        sol = best_solution(sp)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ResolutionWarning)
            res = dp_optimize(sp)
        raw = estimate_switches(res)
        est = refine_switches(raw, sp)
        rel = abs(res.objective - sol.objective) / sol.objective
        worst_obj = max(worst_obj, rel)
        steps = 0.0
        for k, v in sol.switch_times.items():
            lo, hi = est.intervals.get(k, (math.nan, math.nan))
            rlo, rhi = raw.intervals.get(k, (math.nan, math.nan))
            d = max(lo - v, v - hi, 0.0) / res.dt
            steps = max(steps, d if math.isfinite(d) else math.inf)
            rd = max(rlo - v, v - rhi, 0.0) / res.dt
            worst_raw = max(worst_raw, rd if math.isfinite(rd) else math.inf)
        worst_steps = max(worst_steps, steps)
        if rel > 0.01 or steps > 2.0:
            bad.append(f"(nu={nu:.2f}, rho={rho:.2f}): rel={rel:.1e}, steps={steps:.2f}")
    dt = time.perf_counter() - t0
    ok = not bad and dt < 300.0
    report("C4 oracle agreement", ok,
           f"{len(agreement_cases)} cases, max rel objective gap {worst_obj:.1e} (<=1e-2), "
           f"max bracket distance {worst_steps:.2f} steps (<=2; raw DP bands {worst_raw:.1f}), "
           f"{dt:.0f}s (<300s){'; ' + '; '.join(bad) if bad else ''}")
    assert ok


def test_c5_regime_reproduction():
    t0 = time.perf_counter()
    b = classify(36.0, 5.0).label
    c = classify(64.0, 5.0).label
    i = classify(9.0, 5.0).label
    mu_c, r = 64.0 / 12.0, 5.0 / 12.0
    dt = time.perf_counter() - t0
    ok = (b is RegimeLabel.BANG_SINGULAR_BANG and not c.singular
          and c not in (RegimeLabel.INFEASIBLE, RegimeLabel.UNRESOLVED)
          and mu_c > (r + 1) ** 2 / r and i is RegimeLabel.INFEASIBLE and dt < 30.0)
    report("C5 regime reproduction", ok,
           f"(36,5)->{b.value}, (64,5)->{c.value} [mu_bar={mu_c:.4f} > {(r + 1) ** 2 / r:.4f}], "
           f"(9,5)->{i.value}, {dt:.1f}s (<30s)")
    assert ok


def test_c6_bifurcation_geometry():
    t0 = time.perf_counter()
    grid = scan((5.0, 80.0, 20), (1.0, 14.0, 20), FIX, audit=0)
    cells = grid.flat()
    a = all((c.label is RegimeLabel.INFEASIBLE) == (c.nu_bar <= FIX.feasibility_nu(c.rho))
            for c in cells)
    b = all(c.nu_bar <= FIX.singular_nu(c.rho) for c in cells if c.label.singular)
    below_dashed = [c for c in cells if c.label not in (RegimeLabel.INFEASIBLE,)
                    and not c.label.singular and c.nu_bar <= FIX.singular_nu(c.rho)]
    unresolved = [c for c in cells if c.label is RegimeLabel.UNRESOLVED]
    counts = {lab.value: sum(c.label is lab for c in cells) for lab in RegimeLabel}
    dt = time.perf_counter() - t0
    ok = a and b and len(below_dashed) > 0 and dt < 600.0
    report("C6 bifurcation geometry", ok,
           f"(a) infeasible == solid-line set: {a}; (b) singular within dashed curve: {b}; "
           f"(c) non-singular feasible cells below dashed curve: {len(below_dashed)}; "
           f"counts {counts}; unresolved {len(unresolved)}; {dt:.0f}s (<600s)")
    assert ok


def test_c7_kelley_condition(agreement_cases):
    mins = []
    for nu, rho in agreement_cases:
        sp = FIX.scaled(nu, rho)
        sol = best_solution(sp)
        if not sol.structure.is_singular:
            continue
        tr = sol.trajectory
        on = (tr.u > 0.0) & (tr.u < 1.0)
        k = kelley(tr.y[on], tr.lam[on], sp)
        mins.append(float(np.min(k)))
    ok = bool(mins) and min(mins) > 0.0
    report("C7 Kelley condition", ok,
           f"{len(mins)} singular solutions, min 2*lam*mu/(1+y)^3 = {min(mins) if mins else math.nan:.4f} (>0)")
    assert ok


def test_c8_model_approximation_report():
    p = PhysicalParams(nu_tilde=80.0, rho=3.0, I0_bar=0.1, K_I=1.0)
    rep = compare_models(p)
    strong = compare_models(PhysicalParams(nu_tilde=80.0, rho=3.0, I0_bar=10.0, K_I=1.0))
    s = rep.summary()
    ok = (rep.threshold == 0.05 and {"max_rel_dev", "max_rel_dev_light", "max_rel_dev_dark"} <= set(s)
          and rep.rhs_dev_dark == 0.0 and math.isfinite(strong.max_rel_dev))
    report("C8 model-approximation report", ok,
           f"representative: max rel dev {rep.max_rel_dev:.2%} (light {rep.max_rel_dev_light:.2%}, "
           f"dark {rep.max_rel_dev_dark:.2%}), fit error {rep.fit.max_rel_error:.2%}, threshold "
           f"{rep.threshold:.0%} {'met' if rep.within_threshold else 'exceeded'}; strong light: "
           f"{strong.max_rel_dev:.2%} reported without error")
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
