"""Derivative-free Nelder-Mead minimisation with restarts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BudgetExhausted(RuntimeError):
    pass


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    n_evals: int
    converged: bool
    restarts: int


def _nelder_mead(f, x0, scale, xatol, fatol, budget):
    n = x0.size
    pts = np.vstack([x0, x0 + np.diag(scale)])
    vals = np.array([f(p) for p in pts])
    evals = n + 1
    while True:
        order = np.argsort(vals, kind="stable")
        pts, vals = pts[order], vals[order]
        diameter = np.max(np.abs(pts[1:] - pts[0]))
        spread = vals[-1] - vals[0] if np.isfinite(vals[-1]) else np.inf
        if diameter < xatol and spread < fatol:
            return pts[0], vals[0], evals, True
        if evals >= budget:
            return pts[0], vals[0], evals, False
        centroid = pts[:-1].mean(axis=0)
        worst = pts[-1]
        xr = centroid + (centroid - worst)
        fr = f(xr)
        evals += 1
        if fr < vals[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = f(xe)
            evals += 1
            pts[-1], vals[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-1]:
            xc = centroid + 0.5 * (xr - centroid)
        else:
            xc = centroid + 0.5 * (worst - centroid)
        fc = f(xc)
        evals += 1
        if fc < min(fr, vals[-1]):
            pts[-1], vals[-1] = xc, fc
            continue
        pts[1:] = pts[0] + 0.5 * (pts[1:] - pts[0])
        vals[1:] = [f(p) for p in pts[1:]]
        evals += n


def simplex_minimize(objective, start, scale=None, xatol: float = 1e-8,
                     fatol: float = 1e-10, max_evals: int = 100_000,
                     restarts: int = 2, raise_on_budget: bool = False) -> SimplexResult:
    """Minimise ``objective`` from ``start`` by Nelder-Mead.

    Converged means simplex diameter below ``xatol`` and objective spread
    below ``fatol``.  The search is then restarted ``restarts`` times from
    the optimum with a fresh simplex; the budget covers all restarts.
    Nonfinite objective values are treated as +inf.
    """
    x = np.atleast_1d(np.asarray(start, dtype=float)).copy()
    if scale is None:
        scale = np.where(x != 0, 0.1 * np.abs(x), 0.1)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), x.shape).copy()

    def f(p):
        v = float(objective(p))
        return v if np.isfinite(v) else np.inf

    if not np.isfinite(f(x)):
        raise ValueError("objective is not finite at the starting point")
    total = 0
    fx = np.inf
    attempt = 0
    for attempt in range(restarts + 1):
        x, fx, used, converged = _nelder_mead(f, x, scale, xatol, fatol, max_evals - total)
        total += used
        if not converged:
            break
    if not converged and raise_on_budget:
        raise BudgetExhausted(f"no convergence within {max_evals} evaluations")
    return SimplexResult(x=x, fun=float(fx), n_evals=total, converged=converged, restarts=attempt)
