"""Static figures: harvesting trajectories and regime maps (Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

from .bifurcation import LABEL_CODES, BifurcationGrid, RegimeLabel  # noqa: E402
from .model import ScaledParams, Trajectory  # noqa: E402

MODE_COLORS = {"closed": "tab:red", "open": "tab:blue", "singular": "tab:green",
               "fixed": "tab:gray"}
REGIME_COLORS = {
    RegimeLabel.INFEASIBLE: "#444444",
    RegimeLabel.BANG_BANG: "#f4a261",
    RegimeLabel.BANG_SINGULAR_BANG: "#2a9d8f",
    RegimeLabel.SINGULAR_TO_DARK: "#8ecae6",
    RegimeLabel.CONSTANT_MAX: "#e9c46a",
    RegimeLabel.UNRESOLVED: "#d62828",
}


def _mode(u: float, u_sigma: Optional[float]) -> str:
    if u == 0.0:
        return "closed"
    if u == 1.0:
        return "open"
    if u_sigma is not None and abs(u - u_sigma) < 1e-9:
        return "singular"
    return "fixed"


def plot_trajectory(traj: Trajectory, sp: ScaledParams, path: str | Path,
                    time_scale: float = 1.0, u_sigma: Optional[float] = None,
                    title: str = "") -> Path:
    """Biomass over one period, coloured by control mode; dark phase shaded.

    ``time_scale`` converts scaled time to the axis unit (``1/D_max`` for days).
    """
    t = np.asarray(traj.t) * time_scale
    y, u = np.asarray(traj.y), np.asarray(traj.u)
    fig, (ax, axu) = plt.subplots(2, 1, figsize=(6.4, 4.8), sharex=True,
                                  gridspec_kw={"height_ratios": [3, 1]})
    for a in (ax, axu):
        a.axvspan(sp.T_light * time_scale, sp.T * time_scale, color="0.9", zorder=0)
    modes = [_mode(float(v), u_sigma) for v in u[:-1]]
    start = 0
    for k in range(1, len(modes) + 1):
        if k == len(modes) or modes[k] != modes[start]:
            ax.plot(t[start:k + 1], y[start:k + 1], color=MODE_COLORS[modes[start]], lw=2)
            start = k
    handles = [plt.Line2D([], [], color=c, lw=2, label=m) for m, c in MODE_COLORS.items()
               if m in modes]
    ax.legend(handles=handles, loc="best", fontsize=8)
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    axu.step(t, u, where="post", color="k", lw=1)
    axu.set_ylim(-0.05, 1.05)
    axu.set_ylabel("u")
    axu.set_xlabel("time (days)" if time_scale != 1.0 else "scaled time")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_bifurcation(grid: BifurcationGrid, path: str | Path) -> Path:
    """Regime map with the feasibility line (solid) and singular-admissibility curve (dashed)."""
    codes = grid.codes()
    colors = [REGIME_COLORS[lab] for lab in LABEL_CODES]
    cmap = ListedColormap(colors)
    nu, rho = grid.nu, grid.rho
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    dnu = (nu[1] - nu[0]) if nu.size > 1 else 1.0
    drho = (rho[1] - rho[0]) if rho.size > 1 else 1.0
    ax.imshow(codes, origin="lower", cmap=cmap, vmin=-0.5, vmax=len(colors) - 0.5,
              extent=(nu[0] - dnu / 2, nu[-1] + dnu / 2, rho[0] - drho / 2, rho[-1] + drho / 2),
              aspect="auto", interpolation="nearest")
    rr = np.linspace(rho[0] - drho / 2, rho[-1] + drho / 2, 400)
    f = grid.fixed
    ax.plot([f.feasibility_nu(r) for r in rr], rr, "k-", lw=1.5)
    ax.plot([f.singular_nu(r) for r in rr], rr, "k--", lw=1.5)
    for poly in grid.boundaries.get("singular", []):
        ax.plot(poly[:, 0], poly[:, 1], color="tab:blue", lw=1.5)
    for i, j in grid.suspects:
        ax.plot(nu[j], rho[i], "rx")
    ax.set_xlim(nu[0] - dnu / 2, nu[-1] + dnu / 2)
    ax.set_ylim(rho[0] - drho / 2, rho[-1] + drho / 2)
    ax.set_xlabel("nu_bar (1/day)")
    ax.set_ylabel("rho (1/day)")
    present = {c.label for c in grid.flat()}
    handles = [plt.Rectangle((0, 0), 1, 1, color=REGIME_COLORS[lab], label=lab.value)
               for lab in RegimeLabel if lab in present]
    ax.legend(handles=handles, loc="upper right", fontsize=7)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
