"""Nested convex PCA in a tangent space and its lift to principal geodesics.

The engine (:func:`fit_arrays`) works on coordinate arrays with a Euclidean
inner product and a cone from :mod:`wkcc.cones`.  Directions are found
greedily: the j-th direction minimizes

    V(phi) = mean_i  min_{t in I(phi)} ||r_i - t phi||^2

over unit vectors orthogonal to the earlier ones, where ``r_i`` are the
centred data and ``I(phi)`` is the closed-form interval of scores keeping
``mean + t phi`` inside the cone.  V(phi) is never below the unconstrained
PCA objective, so when the top eigenvector of the residual covariance has
all scores inside its interval it is a global minimizer and the search
stops there.  Otherwise a multi-start projected-gradient descent on the
sphere is run from eigenvector and seeded random starts.

Search directions are restricted to the span of the centred data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .cones import GridCone
from .errors import DegenerateData, DimensionTooLarge, GridMismatch
from .geometry import (
    GridDistribution,
    ReferenceMeasure,
    TangentVector,
    _frozen,
    _same_ref,
    exp_map,
    frechet_mean,
    log_map,
)

__all__ = [
    "SolverOptions",
    "ArrayFit",
    "fit_arrays",
    "ConvexPcaModel",
    "ScoreVector",
    "PrincipalGeodesic",
    "fit_convex_pca",
    "project_scores",
    "explained_variation",
    "fit_principal_geodesic",
    "geodesic_project",
    "grid_cone",
]


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-9
    max_iter: int = 200
    seed: int = 0
    eig_starts: int = 5
    random_starts: int = 3
    search_iters: int = 300
    search_tol: float = 1e-7

    def as_dict(self):
        return {
            "tol": self.tol,
            "max_iter": self.max_iter,
            "seed": self.seed,
            "eig_starts": self.eig_starts,
            "random_starts": self.random_starts,
            "search_iters": self.search_iters,
            "search_tol": self.search_tol,
        }


@dataclass(frozen=True)
class ArrayFit:
    mean: np.ndarray
    directions: np.ndarray  # (M, D), orthonormal rows
    tv: float
    scores: np.ndarray  # (n, M) constrained scores of the training data
    ev: np.ndarray  # cumulative explained variation, length M
    objective: np.ndarray  # V(phi_j) per direction
    certified: tuple  # True where the eigenvector certificate held


def _orthonormal_complement(D, taken, count):
    """``count`` unit vectors orthogonal to the rows of ``taken`` (Gram-Schmidt on e_k)."""
    out = []
    basis = [row for row in taken]
    k = 0
    while len(out) < count and k < D:
        v = np.zeros(D)
        v[k] = 1.0
        for b in basis:
            v -= (b @ v) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            v /= nv
            basis.append(v)
            out.append(v)
        k += 1
    return out


class _DirectionSearch:
    def __init__(self, P, B, section, tv, opts: SolverOptions):
        self.P = P  # (n, r) data in span coordinates
        self.B = B  # (D, r) orthonormal span basis
        self.section = section
        self.n = P.shape[0]
        self.sumsq = float(np.sum(P * P))
        self.tv = tv
        self.opts = opts

    def _lift(self, g):
        if isinstance(g, tuple):
            idx, vals = g
            return vals @ self.B[idx]
        return self.B.T @ g

    def value(self, w, grad=False):
        phi = self.B @ w
        s = self.P @ w
        lo, hi, glo, ghi = self.section.interval(phi, grad=grad)
        t = np.clip(s, lo, hi)
        f = (self.sumsq - 2.0 * t @ s + t @ t) / self.n
        if not grad:
            return f, None
        g = -2.0 * (self.P.T @ t) + 2.0 * (t @ t) * w
        at_hi = t < s
        at_lo = t > s
        if at_hi.any() and ghi is not None:
            g += 2.0 * np.sum(t[at_hi] - s[at_hi]) * self._lift(ghi)
        if at_lo.any() and glo is not None:
            g += 2.0 * np.sum(t[at_lo] - s[at_lo]) * self._lift(glo)
        return f, g / self.n

    def certified(self, w) -> bool:
        lo, hi, _, _ = self.section.interval(self.B @ w)
        s = self.P @ w
        slack = self.opts.tol * (1.0 + np.abs(s).max(initial=0.0))
        return bool(np.all(s >= lo - slack) and np.all(s <= hi + slack))

    def descend(self, w, Q):
        """Projected gradient with Armijo backtracking on the sphere.

        Stops when five consecutive steps lower V by less than ``search_tol``
        relative; V has kinks where the binding cone constraint switches, so
        the gradient norm alone is not a usable criterion.
        """
        f, g = self.value(w, grad=True)
        step = 1.0
        hist = [f]
        gtol = 1e-12 * max(self.tv, 1e-300)
        for _ in range(self.opts.search_iters):
            g = Q @ g
            g -= (g @ w) * w
            gn2 = float(g @ g)
            if gn2 <= gtol * gtol:
                break
            while True:
                w_new = w - step * g
                w_new = Q @ w_new
                w_new /= np.linalg.norm(w_new)
                f_new, g_new = self.value(w_new, grad=True)
                if f_new <= f - 1e-4 * step * gn2:
                    break
                step *= 0.5
                if step < 1e-14:
                    return w, f
            w, f, g = w_new, f_new, g_new
            step = min(step * 2.0, 1e3)
            hist.append(f)
            if len(hist) > 5 and hist[-6] - f <= self.opts.search_tol * abs(f):
                break
        return w, f

    def run(self, prev_w, j, warm=None):
        r = self.P.shape[1]
        Q = np.eye(r)
        if prev_w:
            Wp = np.stack(prev_w, axis=1)
            Q = Q - Wp @ Wp.T
        Pj = self.P @ Q
        evals, evecs = np.linalg.eigh(Pj.T @ Pj)
        order = np.argsort(evals)[::-1]
        evecs = evecs[:, order]
        top = Q @ evecs[:, 0]
        top /= np.linalg.norm(top)
        if self.certified(top):
            return top, self.value(top)[0], True

        if warm is not None and np.linalg.norm(Q @ (self.B.T @ warm)) > 0.5:
            # a nearby solution (e.g. the fit with one more observation) is the only start
            starts = [Q @ (self.B.T @ warm)]
        else:
            starts = [Q @ evecs[:, k] for k in range(min(self.opts.eig_starts, r - len(prev_w)))]
            rng = np.random.default_rng([self.opts.seed, j])
            for _ in range(self.opts.random_starts):
                starts.append(Q @ rng.standard_normal(r))
        best_w, best_f = None, np.inf
        for w0 in starts:
            nw = np.linalg.norm(w0)
            if nw < 1e-12:
                continue
            w, f = self.descend(w0 / nw, Q)
            if f < best_f - 1e-15 * max(abs(best_f), 1.0) or best_w is None:
                best_w, best_f = w, f
        return best_w, best_f, False


def _sign_fix(phi):
    k = int(np.argmax(np.abs(phi)))
    return -phi if phi[k] < 0 else phi


def fit_arrays(Y, M, cone, opts: SolverOptions | None = None, warm=None, evaluate=True) -> ArrayFit:
    """Nested convex PCA of the rows of ``Y`` inside ``cone``.

    ``warm`` optionally holds directions (rows) from a closely related fit;
    when the eigenvector certificate fails they replace the multi-start search.
    With ``evaluate=False`` the training scores and EV curve are left empty.
    """
    opts = opts or SolverOptions()
    Y = np.asarray(Y, dtype=float)
    n, D = Y.shape
    if M < 1:
        raise DimensionTooLarge(f"need at least one direction, got M={M}")
    if n < 2:
        raise DegenerateData("convex PCA needs at least two observations")
    if M > min(n - 1, D):
        raise DimensionTooLarge(f"M={M} exceeds min(n-1, dim)={min(n - 1, D)}")
    mean = Y.mean(axis=0)
    R = Y - mean
    tv = float(np.sum(R * R) / n)
    if tv < 1e-14:
        raise DegenerateData(f"total variation {tv:.3g} is zero; all observations coincide")

    U, S, Vt = np.linalg.svd(R, full_matrices=False)
    rank = int(np.sum(S > S[0] * 1e-10))
    B = Vt[:rank].T
    P = U[:, :rank] * S[:rank]
    section = cone.at(mean)
    search = _DirectionSearch(P, B, section, tv, opts)

    directions, objective, certified, prev_w = [], [], [], []
    for j in range(M):
        if j < rank:
            w0 = None if warm is None or j >= len(warm) else np.asarray(warm[j], dtype=float)
            w, f, cert = search.run(prev_w, j, w0)
            prev_w.append(w)
            phi = B @ w
            phi /= np.linalg.norm(phi)
            directions.append(_sign_fix(phi))
            objective.append(f)
            certified.append(cert)
        else:
            extra = _orthonormal_complement(D, list(B.T) + directions, 1)
            directions.append(_sign_fix(extra[0]))
            objective.append(tv)
            certified.append(True)
    Phi = np.stack(directions)

    if not evaluate:
        return ArrayFit(mean, Phi, tv, np.empty((0, M)), np.empty(0), np.asarray(objective), tuple(certified))
    ev = np.empty(M)
    scores = None
    for k in range(1, M + 1):
        scores = section.project(Phi[:k], R @ Phi[:k].T, tol=opts.tol, max_iter=opts.max_iter)
        ev[k - 1] = float(np.sum(scores * scores) / n) / tv
    ev = np.clip(np.maximum.accumulate(ev), 0.0, 1.0)
    return ArrayFit(mean, Phi, tv, scores, ev, np.asarray(objective), tuple(certified))


# --- grid-level API --------------------------------------------------------


def grid_cone(ref: ReferenceMeasure) -> GridCone:
    return GridCone(ref.x, ref.grid.omega_lo, ref.grid.omega_hi)


@dataclass(frozen=True)
class ScoreVector:
    xi: np.ndarray

    def __len__(self):
        return len(self.xi)


@dataclass(frozen=True, eq=False)
class ConvexPcaModel:
    ref: ReferenceMeasure
    mean: TangentVector
    directions: tuple
    M: int
    tv: float
    ev: np.ndarray
    scores: np.ndarray = field(repr=False)
    opts: SolverOptions = field(default_factory=SolverOptions)
    certified: tuple = ()

    @cached_property
    def _section(self):
        scale = np.sqrt(self.ref.grid.m)
        return grid_cone(self.ref).at(self.mean.v / scale)

    @cached_property
    def _Phi(self):
        scale = np.sqrt(self.ref.grid.m)
        return np.stack([d.v / scale for d in self.directions])


def _check_data(ref, data):
    for x in data:
        _same_ref(ref, x.ref)


def fit_convex_pca(
    ref: ReferenceMeasure, data: Sequence[TangentVector], M: int, opts: SolverOptions | None = None
) -> ConvexPcaModel:
    opts = opts or SolverOptions()
    _check_data(ref, data)
    m = ref.grid.m
    scale = np.sqrt(m)
    Y = np.stack([x.v for x in data]) / scale
    fit = fit_arrays(Y, M, grid_cone(ref), opts)
    return ConvexPcaModel(
        ref=ref,
        mean=TangentVector(ref, _frozen(fit.mean * scale)),
        directions=tuple(TangentVector(ref, _frozen(phi * scale)) for phi in fit.directions),
        M=M,
        tv=fit.tv,
        ev=_frozen(fit.ev),
        scores=_frozen(fit.scores),
        opts=opts,
        certified=fit.certified,
    )


def _project_y(model: ConvexPcaModel, Y, Mp):
    scale = np.sqrt(model.ref.grid.m)
    R = np.atleast_2d(Y) - model.mean.v / scale
    Phi = model._Phi[:Mp]
    return model._section.project(Phi, R @ Phi.T, tol=model.opts.tol, max_iter=model.opts.max_iter)


def project_scores(model: ConvexPcaModel, x: TangentVector, Mp: int | None = None):
    """Constrained scores of ``x`` and its projection onto the convex component."""
    _same_ref(model.ref, x.ref)
    Mp = model.M if Mp is None else Mp
    scale = np.sqrt(model.ref.grid.m)
    t = _project_y(model, x.v / scale, Mp)[0]
    proj = model.mean.v + scale * (t @ model._Phi[:Mp])
    return ScoreVector(_frozen(t)), TangentVector(model.ref, _frozen(proj))


def explained_variation(model: ConvexPcaModel, data: Sequence[TangentVector], Mp: int) -> float:
    if not 1 <= Mp <= model.M:
        raise DimensionTooLarge(f"Mp={Mp} outside 1..{model.M}")
    _check_data(model.ref, data)
    scale = np.sqrt(model.ref.grid.m)
    Y = np.stack([x.v for x in data]) / scale
    R = Y - model.mean.v / scale
    tv = float(np.sum(R * R) / len(data))
    if tv <= 0:
        raise DegenerateData("total variation is zero")
    T = _project_y(model, Y, Mp)
    return float(np.sum(T * T) / len(data)) / tv


@dataclass(frozen=True, eq=False)
class PrincipalGeodesic:
    model: ConvexPcaModel
    base: GridDistribution

    @property
    def ref(self):
        return self.model.ref


def fit_principal_geodesic(
    ref: ReferenceMeasure, ds: Sequence[GridDistribution], M: int, opts: SolverOptions | None = None
) -> PrincipalGeodesic:
    for d in ds:
        if d.grid != ref.grid:
            raise GridMismatch("distribution and reference use different grids")
    base = frechet_mean(ds)
    model = fit_convex_pca(ref, [log_map(ref, d) for d in ds], M, opts)
    return PrincipalGeodesic(model=model, base=base)


def geodesic_project(pg: PrincipalGeodesic, nu: GridDistribution) -> GridDistribution:
    _, proj = project_scores(pg.model, log_map(pg.ref, nu))
    return exp_map(pg.ref, proj)
