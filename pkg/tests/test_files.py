from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lux.files import (PARAM_KEYS, load_params, params_from_mapping, parse_overrides, read_csv,
                       to_jsonable, write_csv, write_json, write_manifest)
from lux.model import ParameterError


def test_fig3_file_has_three_scenarios(fig3_params_file):
    ps = load_params(fig3_params_file)
    assert [p.nu_bar for p in ps.scenarios] == [14.0, 36.0, 64.0]
    assert all(p.rho == 5.0 and p.D_max == 12.0 and p.kappa == 1.0 for p in ps.scenarios)
    assert ps.fit is None and ps.first.nu_bar == 14.0


def test_overrides(fig3_params_file):
    ps = load_params(fig3_params_file, ["nu_bar=9", "rho=5.5"])
    assert [p.nu_bar for p in ps.scenarios] == [9.0] and ps.first.rho == 5.5
    ps = load_params(fig3_params_file, ["nu_bar=[20, 30]"])
    assert [p.nu_bar for p in ps.scenarios] == [20.0, 30.0]
    with pytest.raises(ParameterError, match="unknown parameter"):
        parse_overrides(["mu=3"])
    with pytest.raises(ParameterError, match="key=value"):
        parse_overrides(["rho"])


def test_validation_messages(tmp_path):
    with pytest.raises(ParameterError, match="not found"):
        load_params(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ParameterError, match="not valid JSON"):
        load_params(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ParameterError, match="JSON object"):
        load_params(bad)
    with pytest.raises(ParameterError, match="unknown key"):
        params_from_mapping({"nu_bar": 1.0, "kappa": 1.0, "speed": 3})
    with pytest.raises(ParameterError, match="must be a number"):
        params_from_mapping({"nu_bar": 1.0, "kappa": 1.0, "rho": "five"})
    with pytest.raises(ParameterError, match="empty"):
        params_from_mapping({"nu_bar": [], "kappa": 1.0})


def test_missing_saturating_constants_are_fitted():
    ps = params_from_mapping({"nu_tilde": 80.0, "rho": 3.0, "I0_bar": 0.1})
    assert ps.fit is not None
    assert ps.first.nu_bar == ps.fit.nu_bar and ps.first.kappa == ps.fit.kappa
    # an explicit kappa is kept
    ps = params_from_mapping({"nu_tilde": 80.0, "rho": 3.0, "I0_bar": 0.1, "kappa": 2.0})
    assert ps.first.kappa == 2.0 and ps.first.nu_bar == ps.fit.nu_bar


@given(st.lists(st.tuples(st.floats(allow_nan=False, allow_infinity=False, width=64),
                          st.integers(-10, 10), st.sampled_from(["open", "closed"])), max_size=8))
def test_csv_round_trip_is_exact(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "x.csv"
    write_csv(path, ("a", "b", "c"), rows)
    header, body = read_csv(path)
    assert header == ["a", "b", "c"]
    assert [(float(a), int(b), c) for a, b, c in body] == [(float(a), b, c) for a, b, c in rows]


def test_header_written_without_rows(tmp_path):
    write_csv(tmp_path / "e.csv", ("t", "y"), [])
    assert (tmp_path / "e.csv").read_text() == "t,y\n"


def test_to_jsonable():
    import enum

    class E(enum.Enum):
        A = "a"

    data = {"x": np.float64(1.5), "n": np.int64(3), "b": np.bool_(True), "arr": np.arange(2),
            "nan": math.nan, "e": E.A, 4: (1, 2)}
    assert to_jsonable(data) == {"x": 1.5, "n": 3, "b": True, "arr": [0, 1], "nan": None,
                                 "e": "a", "4": [1, 2]}


def test_manifest_is_reproducible(tmp_path, fig3_params_file):
    ps = load_params(fig3_params_file)
    a = write_manifest(tmp_path / "a", "solve", ["solve"], ps).read_text()
    b = write_manifest(tmp_path / "b", "solve", ["solve"], ps).read_text()
    assert a == b
    data = json.loads(a)
    assert {"command", "argv", "versions", "scenarios"} <= set(data)
    assert set(data["scenarios"][0]) == set(PARAM_KEYS)
    assert "scipy" in data["versions"] and "lux" in data["versions"]


def test_write_json_creates_parents(tmp_path):
    write_json(tmp_path / "deep" / "x.json", {"a": [np.float64(2.0)]})
    assert json.loads((tmp_path / "deep" / "x.json").read_text()) == {"a": [2.0]}
