"""Primal active-set solver for projecting a point onto a polytope.

Solves ``min ||t - t0||^2  s.t.  C t <= s`` for small ``t`` (a handful of
principal-component scores) and many constraint rows.  The origin must be
feasible (``s >= 0``), which holds whenever the base point of the affine
component lies in the convex set.
"""

from __future__ import annotations

import numpy as np

from .errors import SolverFailure


def kkt_residual(C, s, t0, t, active, lam) -> float:
    """Largest violation of stationarity, primal and dual feasibility."""
    grad = t - t0
    if len(active):
        grad = grad + C[active].T @ lam
    primal = max(float(np.max(C @ t - s)), 0.0) if C.shape[0] else 0.0
    dual = max(float(-lam.min()), 0.0) if len(active) else 0.0
    return max(float(np.abs(grad).max(initial=0.0)), primal, dual)


def project_polytope(C, s, t0, tol=1e-9, max_iter=200):
    """Return the projection of ``t0`` onto ``{t : C t <= s}``.

    Warm start: if ``t0`` is feasible it is returned unchanged.  Otherwise the
    iteration starts at the origin and follows the usual add/drop rules; ties
    in the ratio test go to the lowest row index.  ``max_iter`` is the budget
    per three dimensions of ``t``: larger score vectors need more add/drop
    steps before the active set settles.
    """
    C = np.asarray(C, dtype=float)
    s = np.maximum(np.asarray(s, dtype=float), 0.0)
    t0 = np.asarray(t0, dtype=float)
    scale = 1.0 + float(np.abs(t0).max(initial=0.0))
    feas_tol = tol * scale
    if C.shape[0] == 0 or np.all(C @ t0 <= s + feas_tol):
        return t0.copy()

    t = np.zeros_like(t0)
    active: list[int] = []
    lam = np.zeros(0)
    budget = max_iter * max(1, -(-t0.size // 3))
    for _ in range(budget):
        if active:
            A = C[active]
            lam = np.linalg.lstsq(A @ A.T, A @ t0 - s[active], rcond=None)[0]
            t_eq = t0 - A.T @ lam
        else:
            lam = np.zeros(0)
            t_eq = t0
        p = t_eq - t
        if np.abs(p).max() <= feas_tol:
            if not active or lam.min() >= -feas_tol:
                res = kkt_residual(C, s, t0, t, active, lam)
                if res > 10 * feas_tol:
                    raise SolverFailure(f"active-set KKT residual {res:.3g} above tolerance")
                return t
            active.pop(int(np.argmin(lam)))
            continue
        Cp = C @ p
        slack = s - C @ t
        cand = Cp > 1e-14 * (1.0 + np.abs(Cp).max())
        if active:
            cand[active] = False
        alpha, block = 1.0, -1
        if np.any(cand):
            idx = np.flatnonzero(cand)
            ratios = np.maximum(slack[idx], 0.0) / Cp[idx]
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                alpha, block = float(ratios[j]), int(idx[j])
        t = t + alpha * p
        if block >= 0:
            active.append(block)
    if active:
        A = C[active]
        lam = np.linalg.lstsq(A @ A.T, A @ t0 - s[active], rcond=None)[0]
    res = kkt_residual(C, s, t0, t, active, lam if active else np.zeros(0))
    raise SolverFailure(f"active-set solver hit {budget} iterations (KKT residual {res:.3g})")
