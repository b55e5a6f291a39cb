"""``lux`` command line: analyse, simulate, solve, verify and map regimes.

Exit status: 0 on success, 2 when parameters violate the feasibility
condition (or leave no growth at all), 1 on solver failure or bad input.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analytic as an
from .bifurcation import FixedParams, RegimeLabel, parse_range, region_e_threshold, scan
from .compare import compare_models
from .direct import refine_switches, seed_inits
from .files import (POLICY_COLUMNS, SCAN_COLUMNS, TRAJECTORY_COLUMNS, ParamSet, load_params,
                    params_dict, write_csv, write_json, write_manifest)
from .model import (ControlPolicy, FitError, LightKind, Mode, NoGrowthError, ParameterError, PhysicalParams,
                    Segment, ScaledParams, Trajectory, rhs_simplified, scale)
from .oracle import OracleConfig, ResolutionWarning, dp_optimize, estimate_switches
from .shooting import NoCandidate, ShootingError, Structure, best_solution, solve_candidate
from .simulate import simulate

EXIT_OK, EXIT_FAILURE, EXIT_INFEASIBLE = 0, 1, 2


class Infeasible(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors must not look like "infeasible"
        self.print_usage(sys.stderr)
        self.exit(EXIT_FAILURE, f"{self.prog}: error: {message}\n")


def _scenario_dir(root: Path, p: PhysicalParams, many: bool) -> Path:
    return root / f"nu_bar_{p.nu_bar:g}" if many else root


def _feasibility_message(p: PhysicalParams) -> str:
    line = p.kappa * p.rho * p.T_cal / p.T_light
    return (f"infeasible: nu_bar={p.nu_bar:g} <= kappa*rho*T_cal/T_light={line:g}; "
            "no periodic harvest keeps the biomass positive (feasibility constraint "
            "mu_bar > r T / T_light)")


def _scaled(p: PhysicalParams) -> ScaledParams:
    try:
        return scale(p)
    except NoGrowthError as exc:
        raise Infeasible(f"infeasible: {exc}") from None


def _days(sp: ScaledParams, p: PhysicalParams, t: float) -> float:
    return t / p.D_max


def _trajectory_rows(traj: Trajectory, p: PhysicalParams):
    return traj.rows(time_scale=1.0 / p.D_max)


def _policy_rows(policy: ControlPolicy, p: PhysicalParams):
    for s in policy.segments:
        yield s.t_start / p.D_max, s.t_end / p.D_max, s.mode.value, s.value


def _plot_traj(args, traj, sp, p, path, title, u_sigma=None):
    if args.no_plot:
        return
    from .plotting import plot_trajectory
    plot_trajectory(traj, sp, path, time_scale=1.0 / p.D_max, u_sigma=u_sigma, title=title)


# subcommands -----------------------------------------------------------------

def cmd_analyze(args, params: ParamSet, out: Path) -> int:
    many = len(params.scenarios) > 1
    status = EXIT_OK
    reports = []
    for p in params.scenarios:
        try:
            sp = _scaled(p)
        except Infeasible as exc:
            print(str(exc), file=sys.stderr)
            reports.append({"nu_bar": p.nu_bar, "feasible": False, "message": str(exc)})
            status = EXIT_INFEASIBLE
            continue
        eq = an.equilibrium_summary(sp)
        fb = an.feasibility(sp)
        rep = {
            "nu_bar": p.nu_bar,
            "scaled": asdict(sp),
            "u_sigma": eq.u_sigma, "y_sigma": eq.y_sigma,
            "saturated": eq.saturated, "u_opt": eq.u_opt,
            "productivity_opt": eq.productivity_opt,
            "productivity_opt_dimensional": eq.productivity_opt * p.kappa * p.D_max * p.V,
            "y0_min": fb.y0_min, "y0_max": fb.y0_max, "carrying_capacity": fb.carrying_capacity,
            "feasible": fb.feasible, "singular_admissible": fb.singular_admissible,
            "feasibility_nu_bar": p.kappa * p.rho * p.T_cal / p.T_light,
            "singular_nu_bar": p.kappa * (p.rho + p.D_max) ** 2 / p.rho,
        }
        write_json(_scenario_dir(out, p, many) / "analysis.json", rep)
        reports.append(rep)
        if not fb.feasible:
            print(_feasibility_message(p), file=sys.stderr)
            status = EXIT_INFEASIBLE
        else:
            print(f"nu_bar={p.nu_bar:g}: u_sigma={eq.u_sigma:.6g} y_sigma={eq.y_sigma:.6g} "
                  f"y0_min={fb.y0_min:.6g} y0_max={fb.y0_max:.6g} "
                  f"singular_admissible={fb.singular_admissible}")
    write_json(out / "summary.json", {"scenarios": reports})
    return status


def _parse_policy(text: str, T_cal: float, D_max: float) -> ControlPolicy:
    """``"0:0.3,1:0.8,0"``: control value, then the calendar time (days) it ends."""
    segs = []
    t0 = 0.0
    items = [s.strip() for s in text.split(",") if s.strip()]
    for k, item in enumerate(items):
        val, sep, end = item.partition(":")
        u = float(val)
        t1 = T_cal if (k == len(items) - 1 or not sep) else float(end)
        if k == len(items) - 1 and sep and not math.isclose(float(end), T_cal):
            raise ParameterError("the last policy segment must end at T_cal (or omit its end)")
        mode = Mode.CLOSED if u == 0 else Mode.OPEN if u == 1 else Mode.FIXED
        segs.append(Segment(t0 * D_max, t1 * D_max, mode, u))
        t0 = t1
    return ControlPolicy(tuple(segs))


def cmd_simulate(args, params: ParamSet, out: Path) -> int:
    many = len(params.scenarios) > 1
    rows = []
    for p in params.scenarios:
        sp = _scaled(p)
        policy = (_parse_policy(args.policy, p.T_cal, p.D_max) if args.policy
                  else ControlPolicy.constant(args.u, sp.T))
        y0 = args.y0
        if y0 is None:
            uc = policy.segments[0].value if len(policy.segments) == 1 else 0.0
            y0 = an.periodic_state(sp, uc) or 0.5 * an.feasibility(sp).carrying_capacity
        d = _scenario_dir(out, p, many)
        if args.schedule == LightKind.STEP.value:
            traj = simulate(policy, y0, sp, step=sp.T / args.steps)
        else:
            traj = _simulate_sine(policy, y0, p, sp, args.steps)
        write_csv(d / "trajectory.csv", TRAJECTORY_COLUMNS, _trajectory_rows(traj, p))
        _plot_traj(args, traj, sp, p, d / "trajectory.png", f"simulate nu_bar={p.nu_bar:g}")
        rep = {"nu_bar": p.nu_bar, "y0": y0, "y_T": float(traj.y[-1]),
               "objective": traj.objective, "objective_dimensional": traj.objective * p.kappa * p.V,
               "policy": policy.describe(), "schedule": args.schedule, "clamped": traj.clamped}
        write_json(d / "simulation.json", rep)
        rows.append(rep)
        print(f"nu_bar={p.nu_bar:g}: y0={y0:.6g} y(T)={traj.y[-1]:.6g} harvest={traj.objective:.6g}")
    write_json(out / "summary.json", {"scenarios": rows})
    return EXIT_OK


def _simulate_sine(policy: ControlPolicy, y0: float, p: PhysicalParams, sp: ScaledParams,
                   steps: int) -> Trajectory:
    """Squared-sine light: the saturating model in calendar time (simulation only)."""
    from .compare import _rk4, time_grid
    from .model import LightSchedule
    sched = LightSchedule.from_params(p, LightKind.SQUARED_SINE)
    cuts = [b / p.D_max for b in policy.boundaries]
    t = time_grid(p, max(2, steps // 2), cuts)
    D = lambda tau: p.D_max * policy.u_at(tau * p.D_max)  # noqa: E731
    x = _rk4(rhs_simplified, p, sched, D, y0 * p.kappa, t)
    u = np.array([policy.u_at(tau * p.D_max) for tau in t])
    ts = t * p.D_max
    y = x / p.kappa
    uy = u * y
    harvest = float(np.sum(0.5 * (uy[1:] + uy[:-1]) * np.diff(ts)))
    return Trajectory(t=ts, y=y, u=u, objective=harvest)


def _structure_arg(text: str) -> Optional[Structure]:
    return None if text == "auto" else Structure(text)


def _solution_report(sol, p: PhysicalParams) -> dict:
    return {
        "structure": sol.structure.value,
        "unknowns": sol.unknowns,
        "switch_times_days": {k: v / p.D_max for k, v in sol.switch_times.items()},
        "residual_norm": sol.residual_norm,
        "objective": sol.objective,
        "objective_dimensional": sol.objective * p.kappa * p.V,
        "checks": sol.checks,
        "diagnostics": sol.diagnostics,
        "policy": sol.policy.describe(),
        "attempts": [asdict(a) for a in sol.attempts],
    }


def _oracle_init(sp: ScaledParams, cfg: Optional[OracleConfig] = None):
    """(DP result, refined switch estimate, raw switch estimate)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        res = dp_optimize(sp, cfg)
    raw = estimate_switches(res)
    return res, refine_switches(raw, sp), raw


def cmd_solve(args, params: ParamSet, out: Path) -> int:
    many = len(params.scenarios) > 1
    status = EXIT_OK
    rows = []
    structure = _structure_arg(args.structure)
    for p in params.scenarios:
        sp = _scaled(p)
        if not an.is_feasible(sp):
            print(_feasibility_message(p), file=sys.stderr)
            rows.append({"nu_bar": p.nu_bar, "status": "infeasible"})
            status = max(status, EXIT_INFEASIBLE)
            continue
        init = seed_inits(_oracle_init(sp)[2], sp) if args.oracle_seed else None
        d = _scenario_dir(out, p, many)
        sol, err = None, None
        try:
            sol = (best_solution(sp, init=init) if structure is None
                   else solve_candidate(structure, sp, init=init))
        except ShootingError as exc:
            err = exc
        if sol is None:
            print(f"nu_bar={p.nu_bar:g}: {err}", file=sys.stderr)
            rep = {"status": "no_candidate" if isinstance(err, NoCandidate) else "failed",
                   "message": str(err)}
            if isinstance(err, NoCandidate):
                rep["attempts"] = [asdict(a) for a in err.attempts]
            write_json(d / "solution.json", rep)
            rows.append({"nu_bar": p.nu_bar, "status": rep["status"]})
            if status != EXIT_INFEASIBLE:
                status = EXIT_FAILURE
            continue
        rep = _solution_report(sol, p)
        write_json(d / "solution.json", rep)
        write_csv(d / "trajectory.csv", TRAJECTORY_COLUMNS, _trajectory_rows(sol.trajectory, p))
        write_csv(d / "policy.csv", POLICY_COLUMNS, _policy_rows(sol.policy, p))
        us = an.u_sigma(sp) if sol.structure.is_singular else None
        _plot_traj(args, sol.trajectory, sp, p, d / "trajectory.png",
                   f"{sol.structure.value}, nu_bar={p.nu_bar:g}", us)
        rows.append({"nu_bar": p.nu_bar, "status": "ok", "structure": sol.structure.value,
                     "objective": sol.objective, "residual_norm": sol.residual_norm})
        times = ", ".join(f"{k}={v / p.D_max:.5g}d" for k, v in sol.switch_times.items())
        print(f"nu_bar={p.nu_bar:g}: {sol.structure.value} harvest={sol.objective:.8g} "
              f"residual={sol.residual_norm:.2e} {times}")
    write_json(out / "summary.json", {"scenarios": rows})
    return status


def cmd_oracle(args, params: ParamSet, out: Path) -> int:
    many = len(params.scenarios) > 1
    status = EXIT_OK
    rows = []
    cfg = OracleConfig(n_time=args.n_time, n_state=args.n_state, n_y0=args.n_y0)
    for p in params.scenarios:
        sp = _scaled(p)
        if not an.is_feasible(sp):
            print(_feasibility_message(p), file=sys.stderr)
            rows.append({"nu_bar": p.nu_bar, "status": "infeasible"})
            status = EXIT_INFEASIBLE
            continue
        res, est, _ = _oracle_init(sp, cfg)
        d = _scenario_dir(out, p, many)
        rep = {
            "nu_bar": p.nu_bar, "objective": res.objective, "harvest": res.harvest,
            "dual_value": res.dp_value, "price": res.price, "y0_star": res.y0_star,
            "period_gap": res.period_gap, "chatter": res.chatter, "dt": res.dt,
            "pattern": list(est.pattern),
            "structure": est.structure.value if est.structure else None,
            "switches": est.switches, "switch_intervals": est.intervals,
            "switches_days": {k: v / p.D_max for k, v in est.switches.items()},
            "dp_switch_intervals": est.raw_intervals or est.intervals,
            "refined_harvest": est.harvest,
            "config": asdict(cfg),
        }
        write_json(d / "oracle.json", rep)
        write_csv(d / "policy.csv", POLICY_COLUMNS, _policy_rows(res.policy, p))
        write_csv(d / "trajectory.csv", TRAJECTORY_COLUMNS, _trajectory_rows(res.trajectory, p))
        _plot_traj(args, res.trajectory, sp, p, d / "trajectory.png",
                   f"oracle, nu_bar={p.nu_bar:g}", res.u_sigma)
        rows.append({"nu_bar": p.nu_bar, "status": "ok", "objective": res.objective,
                     "structure": rep["structure"]})
        print(f"nu_bar={p.nu_bar:g}: oracle harvest={res.objective:.8g} pattern={'-'.join(est.pattern)}"
              f" switches(days)={ {k: round(v / p.D_max, 5) for k, v in est.switches.items()} }")
    write_json(out / "summary.json", {"scenarios": rows})
    return status


def cmd_bifurcate(args, params: Optional[ParamSet], out: Path) -> int:
    fixed = FixedParams.from_physical(params.first) if params is not None else FixedParams()
    grid = scan(parse_range(args.nu_range), parse_range(args.rho_range), fixed,
                warm_start=not args.cold, workers=args.workers, audit=args.audit)
    write_csv(out / "scan.csv", SCAN_COLUMNS,
              ((c.nu_bar, c.rho, c.label.value, c.objective, c.y0, c.residual_norm)
               for c in grid.flat()))
    thresholds = {}
    for rho in args.region_e or ():
        thresholds[f"{rho:g}"] = region_e_threshold(rho, fixed)
    counts = {lab.value: sum(c.label is lab for c in grid.flat()) for lab in RegimeLabel}
    write_json(out / "boundaries.json", {
        "fixed": asdict(fixed),
        "polylines": {k: [poly.tolist() for poly in v] for k, v in grid.boundaries.items()},
        "suspects": [{"nu_bar": float(grid.nu[j]), "rho": float(grid.rho[i])}
                     for i, j in grid.suspects],
        "warm_start_audit": grid.audit, "counts": counts,
        "region_e_threshold": thresholds,
    })
    if not args.no_plot:
        from .plotting import plot_bifurcation
        plot_bifurcation(grid, out / "bifurcation.png")
    print(" ".join(f"{k}={v}" for k, v in counts.items() if v))
    for rho, nu in thresholds.items():
        print(f"region E threshold at rho={rho}: nu_bar={nu}")
    return EXIT_FAILURE if counts[RegimeLabel.UNRESOLVED.value] else EXIT_OK


def _dilution_policy(args, p: PhysicalParams):
    if args.policy:
        pol = _parse_policy(args.policy, p.T_cal, p.D_max)
        return (lambda tau: p.D_max * pol.u_at(tau * p.D_max)), [b / p.D_max for b in pol.boundaries]
    return (lambda tau: p.D_max * args.u), []


def cmd_compare(args, params: ParamSet, out: Path) -> int:
    p = params.first
    y_range = None
    if args.y_range:
        lo, _, hi = args.y_range.partition(":")
        y_range = (float(lo), float(hi))
    D, cuts = _dilution_policy(args, p)
    rep = compare_models(p, y_range, D, args.x0, args.threshold, cuts=cuts)
    summary = rep.summary()
    summary["file_nu_bar"], summary["file_kappa"] = p.nu_bar, p.kappa
    write_json(out / "compare.json", summary)
    write_csv(out / "compare.csv", ("t", "x_reference", "x_simplified"),
              zip(rep.t, rep.x_reference, rep.x_simplified))
    verdict = "within" if rep.within_threshold else "above"
    print(f"fit nu_bar={rep.fit.nu_bar:.6g} kappa={rep.fit.kappa:.6g}; max relative deviation "
          f"{rep.max_rel_dev:.3%} (light {rep.max_rel_dev_light:.3%}, dark {rep.max_rel_dev_dark:.3%}),"
          f" {verdict} the {rep.threshold:.0%} report threshold")
    return EXIT_OK


# parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lux", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", help="JSON parameter file")
    common.add_argument("--output-dir", default="lux-out", help="where artifacts are written")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a parameter of the file (repeatable)")
    common.add_argument("--no-plot", action="store_true", help="skip PNG figures")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("analyze", parents=[common], help="closed-form optimum and feasibility bounds")

    s = sub.add_parser("simulate", parents=[common], help="simulate one period under a policy")
    s.add_argument("--u", type=float, default=0.0, help="constant control in [0, 1]")
    s.add_argument("--policy", help='piecewise control, e.g. "0:0.3,1:0.8,0" (ends in days)')
    s.add_argument("--y0", type=float, help="scaled initial biomass (default: periodic state)")
    s.add_argument("--schedule", choices=[k.value for k in LightKind], default="step")
    s.add_argument("--steps", type=int, default=10000, help="RK4 steps per period")

    s = sub.add_parser("solve", parents=[common], help="PMP candidate solutions")
    s.add_argument("--structure", default="auto", choices=["auto", *[x.value for x in Structure]])
    s.add_argument("--oracle-seed", action="store_true", help="seed Newton from the DP oracle")

    s = sub.add_parser("oracle", parents=[common], help="grid dynamic-programming oracle")
    s.add_argument("--n-time", type=int, default=OracleConfig.n_time)
    s.add_argument("--n-state", type=int, default=OracleConfig.n_state)
    s.add_argument("--n-y0", type=int, default=OracleConfig.n_y0)

    s = sub.add_parser("bifurcate", parents=[common], help="regime map over (nu_bar, rho)")
    s.add_argument("--nu-range", default="5:80:20", help="a:b:n")
    s.add_argument("--rho-range", default="1:14:20", help="c:d:m")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--cold", action="store_true", help="no warm starts between cells")
    s.add_argument("--audit", type=int, default=5, help="cells re-solved cold as a check")
    s.add_argument("--region-e", type=float, action="append", metavar="RHO",
                   help="also locate the constant-control threshold at this rho (repeatable)")

    s = sub.add_parser("compare-models", parents=[common],
                       help="Beer-Lambert versus saturating growth")
    s.add_argument("--y-range", help="fit window lo:hi in g/L")
    s.add_argument("--x0", type=float, help="initial biomass in g/L")
    s.add_argument("--u", type=float, default=0.0)
    s.add_argument("--policy")
    s.add_argument("--threshold", type=float, default=0.05)
    return ap


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "solve": cmd_solve,
            "oracle": cmd_oracle, "bifurcate": cmd_bifurcate, "compare-models": cmd_compare}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    out = Path(args.output_dir)
    try:
        if args.params is None and args.command != "bifurcate":
            raise ParameterError("--params is required for this command")
        params = load_params(args.params, args.set) if args.params else None
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out, args.command, argv, params,
                       {"options": {k: v for k, v in vars(args).items()
                                    if k not in ("params", "set", "command")}})
        return COMMANDS[args.command](args, params, out)
    except Infeasible as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ParameterError, FitError, ValueError, OSError) as exc:
        print(f"lux {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
