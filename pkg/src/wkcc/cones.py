"""Convex feasible sets for convex PCA, in orthonormal coordinates.

Every cone works in coordinates ``y`` whose Euclidean inner product equals
the tangent-space inner product.  ``cone.at(base)`` freezes the base point
of the affine component and returns an object answering two questions:

``interval(d)``
    the set ``{t : base + t d in cone}`` as ``(lo, hi)``, with gradients of
    the finite endpoints with respect to ``d`` (used by the direction search;
    dense arrays, or ``(indices, values)`` pairs when only a few entries are
    nonzero);
``project(D, T0)``
    constrained scores: for each row of ``T0`` the closest ``t`` with
    ``base + D.T @ t`` inside the cone.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateData, SolverFailure
from .qp import project_polytope


class GridCone:
    """Monotone, Omega-valued quantile arrays ``q = x + sqrt(m) * y``."""

    def __init__(self, x, lo, hi):
        self.x = np.asarray(x, dtype=float)
        self.lo = float(lo)
        self.hi = float(hi)
        self.m = self.x.shape[0]
        self.scale = np.sqrt(self.m)
        self.tol = 1e-10 * (self.hi - self.lo)

    def quantiles(self, y):
        return self.x + self.scale * np.asarray(y)

    def contains(self, y) -> bool:
        q = self.quantiles(y)
        return bool(
            np.all(np.diff(q) >= -self.tol) and q.min() >= self.lo - self.tol and q.max() <= self.hi + self.tol
        )

    def at(self, base):
        return _GridSection(self, np.asarray(base, dtype=float))


class _GridSection:
    # constraint rows, in order: q_k - q_{k+1} <= 0 (m-1 rows), q_k <= hi (m rows), -q_k <= -lo (m rows)
    def __init__(self, cone: GridCone, base):
        self.cone = cone
        s = cone.quantiles(base)
        self.slack = np.maximum(np.concatenate([np.diff(s), cone.hi - s, s - cone.lo]), 0.0)

    def rows(self, d):
        dq = self.cone.scale * np.asarray(d)
        a = np.concatenate([dq[:-1] - dq[1:], dq, -dq])
        # Round-off in differences of equal entries (tied quantiles, common to
        # every observation) must not pin the interval at a face of the cone.
        a[np.abs(a) <= 1e-12 * np.abs(dq).max(initial=0.0)] = 0.0
        return a

    def _row_grad(self, k, coef):
        # gradient of a_k(d) * coef, as (indices, values): each row touches at most two entries
        m = self.cone.m
        c = coef * self.cone.scale
        if k < m - 1:
            return np.array([k, k + 1]), np.array([c, -c])
        if k < 2 * m - 1:
            return np.array([k - (m - 1)]), np.array([c])
        return np.array([k - (2 * m - 1)]), np.array([-c])

    def interval(self, d, grad=False):
        """Scores ``t`` with ``base + t d`` in the cone; endpoint gradients are sparse pairs."""
        a = self.rows(d)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = self.slack / a
        pos = a > 0
        hi = lo = None
        glo = ghi = None
        if pos.any():
            k = int(np.argmin(np.where(pos, r, np.inf)))
            hi = float(r[k])
            if grad:
                ghi = self._row_grad(k, -hi / a[k])
        neg = a < 0
        if neg.any():
            k = int(np.argmax(np.where(neg, r, -np.inf)))
            lo = float(r[k])
            if grad:
                glo = self._row_grad(k, -lo / a[k])
        return (-np.inf if lo is None else lo), (np.inf if hi is None else hi), glo, ghi

    def project(self, D, T0, tol=1e-9, max_iter=200):
        D = np.atleast_2d(D)
        T0 = np.atleast_2d(np.asarray(T0, dtype=float))
        if D.shape[0] == 1:
            lo, hi, _, _ = self.interval(D[0])
            return np.clip(T0, lo, hi)
        C = np.stack([self.rows(d) for d in D], axis=1)
        scale = 1.0 + np.abs(T0).max(axis=1)
        ok = np.all(C @ T0.T <= self.slack[:, None] + tol * scale[None, :], axis=0)
        out = T0.copy()
        for i in np.flatnonzero(~ok):
            out[i] = project_polytope(C, self.slack, T0[i], tol=tol, max_iter=max_iter)
        return out


class PsdCone:
    """Symmetric matrices ``V`` with ``V + I`` positive semidefinite.

    ``basis`` has shape ``(P, d, d)``: symmetric matrices orthonormal under
    the inner product of the tangent space, so ``V = sum_a y_a basis[a]``.
    """

    def __init__(self, basis):
        self.basis = np.asarray(basis, dtype=float)
        self.d = self.basis.shape[1]

    def matrix(self, y):
        return np.tensordot(np.asarray(y, dtype=float), self.basis, axes=1)

    def contains(self, y, tol=1e-10) -> bool:
        A = np.eye(self.d) + self.matrix(y)
        return bool(np.linalg.eigvalsh(A).min() >= -tol)

    def at(self, base):
        return _PsdSection(self, np.asarray(base, dtype=float))


class _PsdSection:
    def __init__(self, cone: PsdCone, base):
        self.cone = cone
        A = np.eye(cone.d) + cone.matrix(base)
        A = 0.5 * (A + A.T)
        lam, U = np.linalg.eigh(A)
        if lam.min() <= 1e-12 * max(1.0, lam.max()):
            raise DegenerateData("base point lies on the boundary of the PSD cone")
        self.A = A
        self.inv_sqrt = (U / np.sqrt(lam)) @ U.T

    def interval(self, d, grad=False):
        L = self.inv_sqrt
        B = self.cone.matrix(d)
        lam, U = np.linalg.eigh(L @ (0.5 * (B + B.T)) @ L)
        lo, hi = -np.inf, np.inf
        glo = ghi = None
        # A + tB >= 0  <=>  1 + t * lam_k >= 0 for every eigenvalue of A^-1/2 B A^-1/2
        if lam[-1] > 0:
            lo = -1.0 / lam[-1]
            if grad:
                w = L @ U[:, -1]
                glo = np.einsum("aij,i,j->a", self.cone.basis, w, w) / lam[-1] ** 2
        if lam[0] < 0:
            hi = -1.0 / lam[0]
            if grad:
                w = L @ U[:, 0]
                ghi = np.einsum("aij,i,j->a", self.cone.basis, w, w) / lam[0] ** 2
        return lo, hi, glo, ghi

    def _min_eig(self, Bs, t):
        S = self.A + np.tensordot(t, Bs, axes=1)
        return np.linalg.eigvalsh(S).min()

    def project(self, D, T0, tol=1e-9, max_iter=200):
        D = np.atleast_2d(D)
        T0 = np.atleast_2d(np.asarray(T0, dtype=float))
        if D.shape[0] == 1:
            lo, hi, _, _ = self.interval(D[0])
            return np.clip(T0, lo, hi)
        Bs = np.stack([self.cone.matrix(d) for d in D])
        out = T0.copy()
        for i, t0 in enumerate(T0):
            if self._min_eig(Bs, t0) >= -tol:
                continue
            out[i] = self._barrier(Bs, t0, tol, max_iter)
        return out

    def _barrier(self, Bs, t0, tol, max_iter):
        """Log-det barrier path for ``min ||t - t0||^2  s.t.  A + sum t_j B_j >= 0``."""
        M = Bs.shape[0]
        t = np.zeros(M)
        mu = 1.0
        iters = 0
        while True:
            for _ in range(50):
                iters += 1
                if iters > max_iter * 10:
                    raise SolverFailure("PSD-constrained score solver did not converge")
                S = self.A + np.tensordot(t, Bs, axes=1)
                Sinv = np.linalg.inv(S)
                SB = np.einsum("ij,ajk->aik", Sinv, Bs)
                g = (t - t0) - mu * np.einsum("aii->a", SB)
                H = np.eye(M) + mu * np.einsum("aij,bji->ab", SB, SB)
                step = -np.linalg.solve(H, g)
                dec = -g @ step
                if dec < 1e-30:
                    break

                def f(tt):
                    lam = np.linalg.eigvalsh(self.A + np.tensordot(tt, Bs, axes=1))
                    if lam.min() <= 0:
                        return np.inf
                    return 0.5 * np.sum((tt - t0) ** 2) - mu * np.sum(np.log(lam))

                f0, alpha = f(t), 1.0
                while f(t + alpha * step) > f0 - 0.25 * alpha * dec:
                    alpha *= 0.5
                    if alpha < 1e-16:
                        break
                t = t + alpha * step
                if dec < tol * tol:
                    break
            if mu * self.cone.d < tol * tol:
                return t
            mu *= 0.1
