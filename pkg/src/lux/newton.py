"""Damped Newton / Gauss-Newton for small algebraic systems with domain guards.

The residual function may raise :class:`~lux.analytic.DomainError` for points
outside its domain; such trial points are treated like a failed Armijo test
and the step is halved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analytic import DomainError

Residual = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class NewtonResult:
    x: np.ndarray
    residual: np.ndarray
    norm: float
    iterations: int
    converged: bool
    message: str


def fd_jacobian(F: Residual, x: np.ndarray, f0: np.ndarray, rel_step: float = 1e-7) -> np.ndarray:
    """Central-difference Jacobian, one-sided where the domain forbids a side.

    Steps are relative to each component, so unknowns of very different
    magnitude (a tiny state next to a large costate) are all resolved.
    """
    n = x.size
    J = np.empty((f0.size, n))
    for i in range(n):
        h = rel_step * (abs(x[i]) if x[i] != 0.0 else 1.0)
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fp = fm = None
        try:
            fp = F(xp)
        except DomainError:
            pass
        try:
            fm = F(xm)
        except DomainError:
            pass
        if fp is not None and fm is not None:
            J[:, i] = (fp - fm) / (2 * h)
        elif fp is not None:
            J[:, i] = (fp - f0) / h
        elif fm is not None:
            J[:, i] = (f0 - fm) / h
        else:
            raise DomainError("no admissible finite-difference step")
    return J


def damped_newton(F: Residual, x0, tol: float = 1e-10, max_iter: int = 200,
                  armijo: float = 1e-4, backtrack: float = 0.5,
                  min_step: float = 2.0 ** -40) -> NewtonResult:
    """Solve ``F(x) = 0`` (least squares when overdetermined).

    Convergence is declared on the infinity norm of the residual.
    """
    x = np.array(x0, dtype=float)
    try:
        f = np.asarray(F(x), dtype=float)
    except DomainError as exc:
        return NewtonResult(x, np.full(0, np.nan), np.inf, 0, False, f"initial point: {exc}")
    merit = 0.5 * f @ f
    for it in range(max_iter + 1):
        norm = float(np.max(np.abs(f)))
        if norm <= tol:
            return NewtonResult(x, f, norm, it, True, "converged")
        if it == max_iter:
            break
        try:
            J = fd_jacobian(F, x, f)
        except DomainError as exc:
            return NewtonResult(x, f, norm, it, False, f"jacobian: {exc}")
        if J.shape[0] == J.shape[1]:
            try:
                d = np.linalg.solve(J, -f)
            except np.linalg.LinAlgError:
                d = np.linalg.lstsq(J, -f, rcond=None)[0]
        else:
            d = np.linalg.lstsq(J, -f, rcond=None)[0]
        if not np.all(np.isfinite(d)):
            return NewtonResult(x, f, norm, it, False, "singular jacobian")
        slope = f @ (J @ d)
        alpha = 1.0
        while alpha >= min_step:
            x_try = x + alpha * d
            try:
                f_try = np.asarray(F(x_try), dtype=float)
            except DomainError:
                alpha *= backtrack
                continue
            m_try = 0.5 * f_try @ f_try
            if np.isfinite(m_try) and m_try <= merit + armijo * alpha * min(slope, 0.0):
                break
            alpha *= backtrack
        else:
            # overdetermined systems stall at their least-squares minimum
            return NewtonResult(x, f, norm, it, False, "line search failed")
        if np.max(np.abs(x_try - x)) <= 1e-15 * max(1.0, np.max(np.abs(x))) and m_try >= merit:
            x, f, merit = x_try, f_try, m_try
            break
        x, f, merit = x_try, f_try, m_try
    norm = float(np.max(np.abs(f)))
    return NewtonResult(x, f, norm, max_iter, norm <= tol, "max iterations" if norm > tol else "converged")
