"""Parameter files, overrides, CSV/JSON writers and run manifests."""

from __future__ import annotations

import csv
import json
import math
import platform
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .model import (FitResult, ParameterError, PhysicalParams, default_fit_range,
                    fit_simplified)

PARAM_KEYS = ("nu_tilde", "nu_bar", "kappa", "rho", "D_max", "a", "L_depth", "I0_bar", "K_I",
              "T_cal", "T_light", "V")

TRAJECTORY_COLUMNS = ("t", "y", "u", "lambda", "H")
POLICY_COLUMNS = ("t_start", "t_end", "mode", "u")
SCAN_COLUMNS = ("nu_bar", "rho", "regime", "objective", "y0", "residual_norm")


@dataclass(frozen=True)
class ParamSet:
    """A parameter file: one PhysicalParams per nu_bar value it lists.

    ``nu_bar`` may be a single number or a list; each entry is a scenario.
    ``fit`` is set when nu_bar and kappa were absent and had to be fitted.
    """

    scenarios: tuple[PhysicalParams, ...]
    fit: Optional[FitResult] = None
    source: Optional[str] = None

    @property
    def first(self) -> PhysicalParams:
        return self.scenarios[0]


def parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(items: Sequence[str]) -> dict[str, Any]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ParameterError(f"override must look like key=value, got {item!r}")
        if key not in PARAM_KEYS:
            raise ParameterError(f"unknown parameter {key!r}; expected one of {', '.join(PARAM_KEYS)}")
        out[key] = parse_value(value.strip())
    return out


def params_from_mapping(raw: dict[str, Any], source: Optional[str] = None,
                        fit_threshold: float = 0.05) -> ParamSet:
    unknown = sorted(set(raw) - set(PARAM_KEYS))
    if unknown:
        raise ParameterError(f"unknown key(s) {', '.join(unknown)}; expected {', '.join(PARAM_KEYS)}")
    base = {k: raw[k] for k in PARAM_KEYS if k in raw and k != "nu_bar" and raw[k] is not None}
    for k, v in base.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ParameterError(f"{k} must be a number, got {v!r}")
    nus = raw.get("nu_bar")
    if isinstance(nus, list):
        if not nus:
            raise ParameterError("nu_bar list is empty")
        nu_list: list[Optional[float]] = [float(v) for v in nus]
    else:
        nu_list = [None if nus is None else float(nus)]
    if nu_list[0] is None or base.get("kappa") is None:
        p = PhysicalParams(**{k: float(v) for k, v in base.items() if k != "kappa"})
        fit = fit_simplified(p, default_fit_range(p), threshold=fit_threshold)
        kappa = base.get("kappa", fit.kappa)
        nu_list = [fit.nu_bar if v is None else v for v in nu_list]
        base["kappa"] = kappa
    else:
        fit = None
    scen = tuple(PhysicalParams(nu_bar=nu, **{k: float(v) for k, v in base.items()})
                 for nu in nu_list)
    return ParamSet(scen, fit, source)


def load_params(path: str | Path, overrides: Sequence[str] = (),
                fit_threshold: float = 0.05) -> ParamSet:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ParameterError(f"parameter file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ParameterError(f"{path} must hold a JSON object")
    raw.update(parse_overrides(overrides))
    return params_from_mapping(raw, str(path), fit_threshold)


def params_dict(p: PhysicalParams) -> dict[str, Any]:
    return {f.name: getattr(p, f.name) for f in fields(p)}


def _fmt(v: Any) -> Any:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def to_jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and hasattr(obj, "name"):   # enums
        return obj.value
    return obj


def write_json(path: str | Path, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(data), indent=2, sort_keys=False) + "\n")
    return path


def versions() -> dict[str, str]:
    import matplotlib
    import scipy
    import skimage
    from . import __version__
    return {"lux": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "matplotlib": matplotlib.__version__,
            "scikit-image": skimage.__version__}


def write_manifest(output_dir: str | Path, command: str, argv: Sequence[str],
                   params: Optional[ParamSet], extra: Optional[dict[str, Any]] = None) -> Path:
    """Echo of the resolved inputs; contains no timestamps so reruns compare equal."""
    data: dict[str, Any] = {"command": command, "argv": list(argv), "versions": versions()}
    if params is not None:
        data["params_file"] = params.source
        data["scenarios"] = [params_dict(p) for p in params.scenarios]
        if params.fit is not None:
            data["fit"] = asdict(params.fit)
    if extra:
        data.update(extra)
    return write_json(Path(output_dir) / "manifest.json", data)

