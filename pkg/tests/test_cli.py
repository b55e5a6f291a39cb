from __future__ import annotations

import json
import subprocess
import sys

import pytest

from lux import analytic as an
from lux.cli import EXIT_FAILURE, EXIT_INFEASIBLE, EXIT_OK, main
from lux.files import POLICY_COLUMNS, SCAN_COLUMNS, TRAJECTORY_COLUMNS, read_csv

from conftest import PARAMS_DIR, fig3_scaled

FIG3 = str(PARAMS_DIR / "fig3.json")


def run(tmp_path, *args):
    return main([*args, "--output-dir", str(tmp_path), "--no-plot"])


def test_analyze_reports_closed_forms(tmp_path):
    assert run(tmp_path, "analyze", "--params", FIG3, "--set", "nu_bar=36") == EXIT_OK
    rep = json.loads((tmp_path / "analysis.json").read_text())
    sp = fig3_scaled(36.0)
    assert rep["u_sigma"] == pytest.approx(an.u_sigma(sp))
    assert rep["y_sigma"] == pytest.approx(an.y_sigma(sp))
    assert rep["y0_min"] == pytest.approx(an.y0_min(sp))
    assert rep["y0_max"] == pytest.approx(an.y0_max(sp))
    assert rep["feasible"] is True and rep["singular_admissible"] is True
    assert (tmp_path / "manifest.json").exists()


def test_analyze_infeasible_exits_2_with_reason(tmp_path, capsys):
    assert run(tmp_path, "analyze", "--params", FIG3, "--set", "nu_bar=9") == EXIT_INFEASIBLE
    err = capsys.readouterr().err
    assert "infeasible" in err and "kappa*rho*T_cal/T_light=10" in err


def test_no_growth_is_infeasible(tmp_path):
    assert run(tmp_path, "solve", "--params", FIG3, "--set", "nu_bar=4") == EXIT_INFEASIBLE


def test_solve_writes_fig3_patterns(tmp_path):
    assert run(tmp_path, "solve", "--params", FIG3) == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert [s["structure"] for s in summary["scenarios"]] == ["bb", "bsb", "bb"]
    header, rows = read_csv(tmp_path / "nu_bar_36" / "trajectory.csv")
    assert tuple(header) == TRAJECTORY_COLUMNS
    t = [float(r[0]) for r in rows]
    assert t[0] == 0.0 and t[-1] == pytest.approx(1.0)   # days
    u = {float(r[2]) for r in rows}
    assert {0.0, 1.0} <= u and any(0.0 < v < 1.0 for v in u)
    header, rows = read_csv(tmp_path / "nu_bar_14" / "policy.csv")
    assert tuple(header) == POLICY_COLUMNS
    assert [r[2] for r in rows] == ["closed", "open", "closed"]
    report = json.loads((tmp_path / "nu_bar_36" / "solution.json").read_text())
    assert report["residual_norm"] <= 1e-10 and all(report["checks"].values())


def test_solve_explicit_structure_failure_exits_1(tmp_path):
    assert run(tmp_path, "solve", "--params", FIG3, "--set", "nu_bar=64",
               "--structure", "bsb") == EXIT_FAILURE
    rep = json.loads((tmp_path / "solution.json").read_text())
    assert rep["status"] == "failed"


def test_outputs_are_bitwise_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(d, "solve", "--params", FIG3, "--set", "nu_bar=14") == EXIT_OK
    for name in ("trajectory.csv", "policy.csv", "solution.json", "manifest.json"):
        if name == "manifest.json":
            ma, mb = (json.loads((d / name).read_text()) for d in (a, b))
            ma["argv"] = mb["argv"] = None
            ma["options"]["output_dir"] = mb["options"]["output_dir"] = None
            assert ma == mb
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes()


def test_simulate_constant_and_piecewise(tmp_path):
    assert run(tmp_path / "c", "simulate", "--params", FIG3, "--set", "nu_bar=36",
               "--u", "0.5") == EXIT_OK
    rep = json.loads((tmp_path / "c" / "simulation.json").read_text())
    assert rep["y_T"] == pytest.approx(rep["y0"], rel=1e-8)   # default y0 is periodic
    assert run(tmp_path / "p", "simulate", "--params", FIG3, "--set", "nu_bar=36",
               "--policy", "0:0.2,1:0.6,0", "--y0", "0.05") == EXIT_OK
    header, rows = read_csv(tmp_path / "p" / "trajectory.csv")
    assert tuple(header) == TRAJECTORY_COLUMNS
    assert run(tmp_path / "s", "simulate", "--params", FIG3, "--set", "nu_bar=36",
               "--schedule", "squared_sine", "--y0", "0.1") == EXIT_OK
    assert run(tmp_path / "bad", "simulate", "--params", FIG3, "--policy", "0:0.2,1:0.6,0:0.9",
               "--y0", "0.1") == EXIT_FAILURE


def test_oracle_command(tmp_path):
    assert run(tmp_path, "oracle", "--params", FIG3, "--set", "nu_bar=14", "--n-time", "400",
               "--n-state", "200", "--n-y0", "16") == EXIT_OK
    rep = json.loads((tmp_path / "oracle.json").read_text())
    assert rep["structure"] == "bb" and set(rep["switches"]) == {"t01", "t10"}
    header, _ = read_csv(tmp_path / "policy.csv")
    assert tuple(header) == POLICY_COLUMNS


def test_bifurcate_command(tmp_path):
    assert run(tmp_path, "bifurcate", "--nu-range", "5:80:3", "--rho-range", "2:10:2",
               "--audit", "0") == EXIT_OK
    header, rows = read_csv(tmp_path / "scan.csv")
    assert tuple(header) == SCAN_COLUMNS and len(rows) == 6
    b = json.loads((tmp_path / "boundaries.json").read_text())
    assert {"polylines", "suspects", "counts", "fixed"} <= set(b)


def test_compare_models_command(tmp_path):
    assert run(tmp_path, "compare-models", "--params", str(PARAMS_DIR / "beer_lambert.json")) == EXIT_OK
    rep = json.loads((tmp_path / "compare.json").read_text())
    assert rep["within_threshold"] is True and rep["rhs_dev_dark"] == 0.0


def test_input_errors_exit_1(tmp_path, capsys):
    assert run(tmp_path, "analyze", "--params", str(tmp_path / "nope.json")) == EXIT_FAILURE
    assert "not found" in capsys.readouterr().err
    assert run(tmp_path, "analyze", "--params", FIG3, "--set", "speed=3") == EXIT_FAILURE
    assert run(tmp_path, "analyze") == EXIT_FAILURE
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--structure", "zigzag"])
    assert exc.value.code == EXIT_FAILURE


def test_plots_and_console_script(tmp_path):
    out = tmp_path / "plot"
    proc = subprocess.run([sys.executable, "-m", "lux.cli", "solve", "--params", FIG3, "--set",
                           "nu_bar=36", "--output-dir", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (out / "trajectory.png").stat().st_size > 0
    assert "bsb" in proc.stdout
