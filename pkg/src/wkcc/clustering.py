"""k-centres distributional clustering (kCDC) and Wasserstein k-means baselines.

kCDC runs in three stages: a global dimension ``M`` chosen by explained
variation, an initial partition from k-means on convex-PCA scores, and
batch reclassification where every distribution moves to the cluster whose
principal geodesic (fitted without it) passes closest in d_W.

On a quantile grid the tangent cone at a reference is
``{v : x + v monotone, inside Omega}``, which only depends on the quantiles
``x + v``; convex PCA is also translation invariant.  All cluster fits can
therefore share one reference measure, and the geodesic based at each
cluster's Frechet mean comes out of the centring in :func:`fit_arrays`.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cones import GridCone
from .cpca import (
    ConvexPcaModel,
    PrincipalGeodesic,
    SolverOptions,
    fit_arrays,
)
from .errors import (
    DegenerateData,
    DimensionTooLarge,
    EmptyCluster,
    EmptyInput,
    TooFewPoints,
)
from .geometry import (
    GridDistribution,
    ReferenceMeasure,
    TangentVector,
    _frozen,
    _same_grid,
    frechet_mean,
    make_reference,
    uniform_distribution,
    wasserstein_distance,
)

log = logging.getLogger(__name__)

__all__ = [
    "KmeansOptions",
    "KcdcConfig",
    "ClusterState",
    "kmeans",
    "reference_for",
    "select_dimension",
    "initial_clustering",
    "reclassify",
    "kcdc_cluster",
    "cpca_cluster",
    "run_kcentres",
    "wasserstein_kmeans",
    "trimmed_wasserstein_distance",
    "trimmed_wasserstein_kmeans",
]


# --- k-means -------------------------------------------------------------------


@dataclass(frozen=True)
class KmeansOptions:
    restarts: int = 10
    max_iter: int = 300

    def __post_init__(self):
        if self.restarts < 1 or self.max_iter < 1:
            raise ValueError("k-means needs restarts >= 1 and max_iter >= 1")


def _sqdist(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _plusplus(X, K, rng):
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sqdist(X, X[chosen])[:, 0]
    for _ in range(1, K):
        total = d2.sum()
        if total > 0:
            j = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining points coincide with a centre
            rest = np.setdiff1d(np.arange(n), chosen)
            j = int(rest[rng.integers(rest.size)])
        chosen.append(j)
        d2 = np.minimum(d2, _sqdist(X, X[[j]])[:, 0])
    return X[chosen].copy()


def _lloyd(X, C, max_iter):
    labels = None
    K = C.shape[0]
    for _ in range(max_iter):
        D = _sqdist(X, C)
        new = np.argmin(D, axis=1)
        for c in range(K):
            if not np.any(new == c):
                # empty cluster: move the point worst served by its centre
                far = int(np.argmax(D[np.arange(len(X)), new]))
                new[far] = c
                D[far] = 0.0
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        C = np.stack([X[labels == c].mean(axis=0) for c in range(K)])
    D = _sqdist(X, C)
    wcss = float(D[np.arange(len(X)), labels].sum())
    return labels, wcss


def kmeans(points, K: int, opts: KmeansOptions | None = None, seed: int = 0) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; best of ``opts.restarts`` runs."""
    opts = opts or KmeansOptions()
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if K < 1:
        raise ValueError("K must be positive")
    if n < K:
        raise TooFewPoints(f"{n} points cannot form {K} clusters")
    if K == 1:
        return np.zeros(n, dtype=int)
    rng = np.random.default_rng(seed)
    best, best_w = None, np.inf
    for _ in range(opts.restarts):
        labels, w = _lloyd(X, _plusplus(X, K, rng), opts.max_iter)
        if best is None or w < best_w - 1e-12 * best_w:
            best, best_w = labels, w
    return _canonical(best)


def _canonical(labels):
    """Relabel clusters in order of first appearance."""
    order = {}
    for lab in labels:
        order.setdefault(int(lab), len(order))
    return np.array([order[int(lab)] for lab in labels], dtype=int)


# --- Wasserstein k-means baselines -------------------------------------------------


def _quantile_matrix(ds):
    if not ds:
        raise EmptyInput("no distributions")
    g = ds[0].grid
    for d in ds[1:]:
        _same_grid(g, d.grid)
    return np.stack([d.q for d in ds]), g


def _trim_mask(grid, delta):
    if not 0.0 <= delta < 0.5:
        raise ValueError(f"trimming constant must lie in [0, 0.5), got {delta}")
    u = grid.levels
    return (u >= delta) & (u <= 1.0 - delta)


def trimmed_wasserstein_distance(d1: GridDistribution, d2: GridDistribution, delta: float) -> float:
    """d_W restricted to quantile levels in ``[delta, 1 - delta]``, rescaled by ``1/(1 - 2 delta)``."""
    _same_grid(d1.grid, d2.grid)
    keep = _trim_mask(d1.grid, delta)
    if delta == 0.0:
        return wasserstein_distance(d1, d2)
    diff = (d1.q - d2.q)[keep]
    return float(np.sqrt(np.dot(diff, diff) / d1.grid.m / (1.0 - 2.0 * delta)))


def wasserstein_kmeans(ds: Sequence[GridDistribution], K: int, opts: KmeansOptions | None = None, seed: int = 0):
    """k-means in (P(Omega), d_W); barycentres are pointwise quantile means."""
    return trimmed_wasserstein_kmeans(ds, K, 0.0, opts, seed)


def trimmed_wasserstein_kmeans(ds, K: int, delta: float, opts: KmeansOptions | None = None, seed: int = 0):
    # Scaling coordinates by sqrt(weight) turns the (trimmed) d_W into a
    # Euclidean distance; the mean of scaled rows is the scaled barycentre.
    Q, grid = _quantile_matrix(ds)
    keep = _trim_mask(grid, delta)
    w = keep / (grid.m * (1.0 - 2.0 * delta))
    return kmeans(Q[:, keep] * np.sqrt(w[keep]), K, opts, seed)


# --- kCDC ------------------------------------------------------------------------


@dataclass(frozen=True)
class KcdcConfig:
    K: int = 2
    tau: float = 0.9
    max_outer_iters: int = 20
    loo: bool = True
    min_cluster_size: int | None = None  # None -> max(3, M + 2)
    seed: int = 0
    kmeans: KmeansOptions = field(default_factory=KmeansOptions)
    # single top-eigenvector start: the many fits per iteration dominate run time
    solver: SolverOptions = field(default_factory=lambda: SolverOptions(eig_starts=1, random_starts=0))
    reference: str = "uniform"  # or "frechet"
    threads: int = 1

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.min_cluster_size is not None and self.min_cluster_size < 2:
            raise ValueError("min_cluster_size must be >= 2")
        if self.max_outer_iters < 0:
            raise ValueError("max_outer_iters must be >= 0")
        if self.reference not in ("uniform", "frechet"):
            raise ValueError(f"reference must be 'uniform' or 'frechet', got {self.reference!r}")

    def floor(self, M: int) -> int:
        return self.min_cluster_size if self.min_cluster_size is not None else max(3, M + 2)

    def as_dict(self):
        return {
            "K": self.K,
            "tau": self.tau,
            "max_outer_iters": self.max_outer_iters,
            "loo": self.loo,
            "min_cluster_size": self.min_cluster_size,
            "seed": self.seed,
            "kmeans_restarts": self.kmeans.restarts,
            "kmeans_max_iter": self.kmeans.max_iter,
            "solver": self.solver.as_dict(),
            "reference": self.reference,
        }


@dataclass(frozen=True, eq=False)
class ClusterState:
    labels: np.ndarray  # 0-based
    models: tuple  # PrincipalGeodesic per cluster (None for a mean-only cluster)
    iteration: int
    objective: float
    M: int
    reason: str = ""
    history: tuple = ()  # objective after each visited state

    @property
    def K(self):
        return len(self.models)

    def to_dict(self):
        clusters = []
        for c, pg in enumerate(self.models):
            entry = {"label": c + 1, "size": int(np.sum(self.labels == c))}
            if pg is not None:
                entry["frechet_mean"] = pg.base.q
                entry["directions"] = [d.v for d in pg.model.directions]
                entry["scores"] = pg.model.scores
                entry["ev"] = pg.model.ev
                entry["certified"] = list(pg.model.certified)
            clusters.append(entry)
        return {
            "labels": (self.labels + 1).tolist(),
            "M": self.M,
            "iterations": self.iteration,
            "objective": self.objective,
            "objective_history": list(self.history),
            "convergence": self.reason,
            "clusters": clusters,
        }


def reference_for(ds: Sequence[GridDistribution], cfg: KcdcConfig | None = None) -> ReferenceMeasure:
    """Shared reference measure: Uniform(Omega), or the jittered global Frechet mean."""
    if not ds:
        raise EmptyInput("no distributions")
    if cfg is not None and cfg.reference == "frechet":
        return make_reference(frechet_mean(ds), jitter=True)
    return make_reference(uniform_distribution(ds[0].grid))


class _Space:
    """Tangent coordinates ``Y`` (Euclidean = tangent inner product) and their cone.

    Subclasses define the distance between an observation and its
    projection on a fitted convex component.
    """

    def __init__(self, Y, cone, opts: SolverOptions):
        self.Y = Y
        self.cone = cone
        self.opts = opts

    @property
    def n(self):
        return self.Y.shape[0]

    def fit(self, idx, M, warm=None, evaluate=True):
        """Convex PCA on rows ``idx``; ``None`` marks a mean-only fallback."""
        Y = self.Y[idx]
        try:
            return fit_arrays(Y, min(M, len(idx) - 1), self.cone, self.opts, warm, evaluate)
        except (DegenerateData, DimensionTooLarge):
            return None

    def project(self, fit, idx, members):
        """Coordinates of the projections of rows ``idx`` on the component ``fit``."""
        Y = self.Y[idx]
        if fit is None:
            return np.broadcast_to(self.Y[members].mean(axis=0), Y.shape)
        sec = self.cone.at(fit.mean)
        T = sec.project(fit.directions, (Y - fit.mean) @ fit.directions.T, self.opts.tol, self.opts.max_iter)
        return fit.mean + T @ fit.directions

    def distances(self, fit, idx, members):
        diff = self.Y[idx] - self.project(fit, idx, members)
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))


class _Workspace(_Space):
    """Quantile grid at a fixed reference; distances are d_W to the geodesic projection."""

    def __init__(self, ref: ReferenceMeasure, ds, opts: SolverOptions):
        Q, grid = _quantile_matrix(ds)
        _same_grid(ref.grid, grid)
        self.ref = ref
        self.grid = grid
        self.Q = Q
        cone = GridCone(ref.x, grid.omega_lo, grid.omega_hi)
        super().__init__((Q - ref.x) / cone.scale, cone, opts)

    def distances(self, fit, idx, members):
        q = np.sort(self.cone.quantiles(self.project(fit, idx, members)), axis=1)
        q = np.clip(q, self.grid.omega_lo, self.grid.omega_hi)
        diff = self.Q[idx] - q
        return np.sqrt(np.einsum("ij,ij->i", diff, diff) / self.grid.m)

    def geodesic(self, fit, members) -> PrincipalGeodesic | None:
        if fit is None:
            return None
        scale = self.cone.scale
        model = ConvexPcaModel(
            ref=self.ref,
            mean=TangentVector(self.ref, _frozen(fit.mean * scale)),
            directions=tuple(TangentVector(self.ref, _frozen(p * scale)) for p in fit.directions),
            M=fit.directions.shape[0],
            tv=fit.tv,
            ev=_frozen(fit.ev),
            scores=_frozen(fit.scores),
            opts=self.opts,
            certified=fit.certified,
        )
        base = GridDistribution(self.grid, _frozen(self.Q[members].mean(axis=0)))
        return PrincipalGeodesic(model=model, base=base)


def _select_from_workspace(ws: _Workspace, tau: float) -> int:
    n = ws.Y.shape[0]
    if n < 3:
        raise TooFewPoints("dimension selection needs at least three distributions")
    cap = max(1, min(n - 2, ws.Y.shape[1]))
    fit = _fit_until(ws, cap, tau)
    hits = np.flatnonzero(fit.ev >= tau)
    return int(hits[0] + 1) if hits.size else cap


def _fit_until(ws: _Workspace, cap: int, tau: float):
    # greedy directions are nested, so the EV curve of a larger fit contains
    # every smaller one; double M until it reaches tau
    M = 1
    while True:
        fit = fit_arrays(ws.Y, M, ws.cone, ws.opts)
        if fit.ev[-1] >= tau or M >= cap:
            return fit
        M = min(cap, M * 2)


def select_dimension(ref: ReferenceMeasure, ds: Sequence[GridDistribution], tau: float, opts: SolverOptions | None = None) -> int:
    """Smallest M with explained variation at least ``tau`` (capped at n - 2)."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    return _select_from_workspace(_Workspace(ref, ds, opts or SolverOptions()), tau)


def initial_clustering(ref, ds, K: int, M: int, opts: SolverOptions | None = None, kopts: KmeansOptions | None = None, seed: int = 0):
    """k-means on the constrained convex-PCA scores of all distributions."""
    ws = _Workspace(ref, ds, opts or SolverOptions())
    return _initial(ws, K, M, kopts, seed)


def _initial(ws, K, M, kopts, seed):
    if K == 1:
        return np.zeros(ws.Y.shape[0], dtype=int)
    fit = fit_arrays(ws.Y, M, ws.cone, ws.opts)
    return kmeans(fit.scores, K, kopts, seed)


def _repair_sizes(ws, labels, K, floor):
    """Top up undersized clusters with their nearest points from clusters above the floor."""
    labels = labels.copy()
    for _ in range(len(labels)):
        sizes = np.bincount(labels, minlength=K)
        small = np.flatnonzero(sizes < floor)
        if small.size == 0:
            return labels
        c = int(small[0])
        centre = ws.Y[labels == c].mean(axis=0) if sizes[c] else ws.Y.mean(axis=0)
        d = np.sum((ws.Y - centre) ** 2, axis=1)
        donors = (labels != c) & (sizes[labels] > floor)
        if not donors.any():
            raise EmptyCluster(f"cannot give every cluster {floor} members")
        i = int(np.flatnonzero(donors)[np.argmin(d[donors])])
        labels[i] = c
    return labels


def _distance_matrix(ws, labels, K, M, loo, pool):
    n = len(labels)
    D = np.empty((n, K))
    fits = []
    for c in range(K):
        members = np.flatnonzero(labels == c)
        full = ws.fit(members, M)
        fits.append(full)
        others = np.flatnonzero(labels != c)
        if others.size:
            D[others, c] = ws.distances(full, others, members)
        if not loo:
            D[members, c] = ws.distances(full, members, members)
            continue

        warm = None if full is None else full.directions

        def held_out(i, members=members, warm=warm):
            keep = members[members != i]
            return ws.distances(ws.fit(keep, M, warm, evaluate=False), [i], keep)[0]

        vals = list(pool.map(held_out, members)) if pool else [held_out(i) for i in members]
        D[members, c] = vals
    return D, fits


def _step(ws, labels, K, M, cfg, pool):
    D, fits = _distance_matrix(ws, labels, K, M, cfg.loo, pool)
    idx = np.arange(len(labels))
    objective = float(np.sum(D[idx, labels] ** 2))
    new = np.argmin(D, axis=1)  # ties -> lowest cluster index
    floor = cfg.floor(M)
    margin = D[idx, labels] - D[idx, new]
    moved = np.flatnonzero(new != labels)
    for i in moved[np.argsort(margin[moved], kind="stable")]:
        sizes = np.bincount(new, minlength=K)
        if sizes[labels[i]] < floor:
            new[i] = labels[i]
    if np.any(np.bincount(new, minlength=K) < floor):
        raise EmptyCluster("reclassification left a cluster below the size floor")
    return new, objective, fits


def _state(ws, labels, K, M, fits, iteration, objective, reason="", history=()):
    models = tuple(ws.geodesic(fits[c], np.flatnonzero(labels == c)) for c in range(K))
    return ClusterState(np.array(labels), models, iteration, objective, M, reason, tuple(history))


def _pool(cfg):
    return ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None


def reclassify(ref, ds, state: ClusterState, M: int, cfg: KcdcConfig) -> ClusterState:
    """One batch reclassification step from ``state``."""
    ws = _Workspace(ref, ds, cfg.solver)
    K = state.K
    if K == 1:
        return state
    pool = _pool(cfg)
    try:
        new, _, _ = _step(ws, state.labels, K, M, cfg, pool)
        D, fits = _distance_matrix(ws, new, K, M, cfg.loo, pool)
    finally:
        if pool:
            pool.shutdown()
    obj = float(np.sum(D[np.arange(len(new)), new] ** 2))
    return _state(ws, new, K, M, fits, state.iteration + 1, obj)


def _prepare(ds, cfg, M):
    ws = _Workspace(reference_for(ds, cfg), ds, cfg.solver)
    if M is None:
        M = _select_from_workspace(ws, cfg.tau)
    n = len(ds)
    if n < cfg.K * cfg.floor(M):
        raise TooFewPoints(f"{n} distributions cannot fill {cfg.K} clusters of at least {cfg.floor(M)}")
    return ws, M


def cpca_cluster(ds: Sequence[GridDistribution], cfg: KcdcConfig, M: int | None = None) -> ClusterState:
    """The initial-clustering stage alone (k-means on global convex-PCA scores)."""
    ws, M = _prepare(ds, cfg, M)
    labels = _initial(ws, cfg.K, M, cfg.kmeans, cfg.seed)
    fits = [ws.fit(np.flatnonzero(labels == c), M) for c in range(cfg.K)]
    D = np.empty(len(labels))
    for c in range(cfg.K):
        members = np.flatnonzero(labels == c)
        if members.size:
            D[members] = ws.distances(fits[c], members, members)
    obj = float(np.sum(D**2))
    return _state(ws, labels, cfg.K, M, fits, 0, obj, "initial", (obj,))


def kcdc_cluster(ds: Sequence[GridDistribution], cfg: KcdcConfig, M: int | None = None) -> ClusterState:
    """Full kCDC: dimension selection, initial clustering, batch reclassification.

    Stops when labels repeat (fixed point or cycle) or after
    ``cfg.max_outer_iters`` steps, and returns the visited partition with
    the smallest objective ``sum_i d_W^2(nu_i, projection on own cluster)``.
    """
    ws, M = _prepare(ds, cfg, M)
    labels, fits, iteration, obj, reason, history = run_kcentres(ws, cfg.K, M, cfg)
    return _state(ws, labels, cfg.K, M, fits, iteration, obj, reason, history)


def run_kcentres(ws: _Space, K: int, M: int, cfg: KcdcConfig):
    """Initial clustering plus reclassification on any coordinate space.

    Returns ``(labels, fits, iteration, objective, reason, history)`` for the
    visited partition with the smallest objective.
    """
    labels = _initial(ws, K, M, cfg.kmeans, cfg.seed)
    labels = _repair_sizes(ws, labels, K, cfg.floor(M))
    if K == 1:
        D, fits = _distance_matrix(ws, labels, 1, M, cfg.loo, None)
        obj = float(np.sum(D[:, 0] ** 2))
        return labels, fits, 0, obj, "single-cluster", (obj,)

    pool = _pool(cfg)
    seen = {labels.tobytes(): 0}
    visited = []  # (objective, iteration, labels, fits)
    reason = "max-iterations"
    try:
        it = 0
        while True:
            new, obj, fits = _step(ws, labels, K, M, cfg, pool)
            visited.append((obj, it, labels, fits))
            log.debug("k-centres iteration %d objective %.6g moved %d", it, obj, int(np.sum(new != labels)))
            if np.array_equal(new, labels):
                reason = "converged"
                break
            if it + 1 > cfg.max_outer_iters:
                break
            key = new.tobytes()
            if key in seen:
                reason = "cycle"
                break
            it += 1
            seen[key] = it
            labels = new
    finally:
        if pool:
            pool.shutdown()
    history = tuple(v[0] for v in visited)
    best = min(range(len(visited)), key=lambda k: (visited[k][0], k))
    obj, iteration, labels, fits = visited[best]
    return labels, fits, iteration, obj, reason, history
