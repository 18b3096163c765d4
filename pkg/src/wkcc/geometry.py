"""Wasserstein geometry of distributions on a compact interval.

Distributions are stored as quantile values on a fixed midpoint grid
``u_k = (k - 1/2) / m``.  On the line the 2-Wasserstein distance is the
L2 distance between quantile functions, so every operation here reduces to
vector arithmetic on those arrays:

* ``log_map(ref, mu)`` is ``q(mu) - q(ref)`` (optimal displacement),
* ``exp_map(ref, g)`` is the monotone rearrangement of ``g + q(ref)``,
* the tangent inner product is the grid average of pointwise products.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import EmptyInput, GridMismatch, NonMonotoneQuantiles, OutOfDomain

__all__ = [
    "Grid",
    "GridDistribution",
    "ReferenceMeasure",
    "TangentVector",
    "make_distribution",
    "make_reference",
    "uniform_distribution",
    "wasserstein_distance",
    "log_map",
    "exp_map",
    "frechet_mean",
    "tangent_inner",
    "tangent_norm",
    "in_tangent_cone",
]

DEFAULT_M = 1000


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid:
    """Midpoint quantile levels on ``Omega = [omega_lo, omega_hi]``."""

    m: int = DEFAULT_M
    omega_lo: float = 0.0
    omega_hi: float = 1.0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ValueError(f"grid needs m >= 2 levels, got {self.m}")
        if not self.omega_lo < self.omega_hi:
            raise ValueError(f"empty domain [{self.omega_lo}, {self.omega_hi}]")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "omega_lo", float(self.omega_lo))
        object.__setattr__(self, "omega_hi", float(self.omega_hi))

    @cached_property
    def levels(self) -> np.ndarray:
        return _frozen((np.arange(1, self.m + 1) - 0.5) / self.m)

    @property
    def width(self) -> float:
        return self.omega_hi - self.omega_lo

    @property
    def tol_mono(self) -> float:
        return 1e-10 * self.width


@dataclass(frozen=True, eq=False)
class GridDistribution:
    grid: Grid
    q: np.ndarray

    def __repr__(self):
        return f"GridDistribution(m={self.grid.m}, q=[{self.q[0]:.4g} .. {self.q[-1]:.4g}])"


@dataclass(frozen=True, eq=False)
class ReferenceMeasure:
    """Base point of the tangent space; quantiles strictly increasing."""

    dist: GridDistribution

    def __post_init__(self):
        if np.any(np.diff(self.dist.q) <= 0):
            raise NonMonotoneQuantiles("reference quantiles must be strictly increasing")

    @property
    def grid(self) -> Grid:
        return self.dist.grid

    @property
    def x(self) -> np.ndarray:
        return self.dist.q


@dataclass(frozen=True, eq=False)
class TangentVector:
    ref: ReferenceMeasure
    v: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.v.shape != (self.ref.grid.m,):
            raise GridMismatch(f"tangent vector has shape {self.v.shape}, grid has m={self.ref.grid.m}")
        if not np.all(np.isfinite(self.v)):
            raise ValueError("tangent vector has non-finite entries")

    def __add__(self, other: "TangentVector") -> "TangentVector":
        _same_ref(self.ref, other.ref)
        return TangentVector(self.ref, _frozen(self.v + other.v))

    def __sub__(self, other: "TangentVector") -> "TangentVector":
        _same_ref(self.ref, other.ref)
        return TangentVector(self.ref, _frozen(self.v - other.v))

    def __mul__(self, c: float) -> "TangentVector":
        return TangentVector(self.ref, _frozen(self.v * float(c)))

    __rmul__ = __mul__


def _same_grid(g1: Grid, g2: Grid) -> None:
    if g1 != g2:
        raise GridMismatch(f"grid mismatch: {g1} vs {g2}")


def _same_ref(r1: ReferenceMeasure, r2: ReferenceMeasure) -> None:
    if r1 is r2:
        return
    _same_grid(r1.grid, r2.grid)
    if not np.array_equal(r1.x, r2.x):
        raise GridMismatch("tangent vectors live at different reference measures")


def _validate_quantiles(grid: Grid, q: np.ndarray, ident=None) -> np.ndarray:
    tol = grid.tol_mono
    if q.shape != (grid.m,):
        raise GridMismatch(f"expected {grid.m} quantile values, got {q.shape[0] if q.ndim else 'scalar'}")
    if not np.all(np.isfinite(q)):
        raise NonMonotoneQuantiles("quantiles contain non-finite values", ident)
    drops = np.diff(q)
    if drops.size and drops.min() < -tol:
        k = int(np.argmin(drops))
        raise NonMonotoneQuantiles(
            f"quantiles decrease at level {k + 1}: {q[k]:.6g} -> {q[k + 1]:.6g}"
            + (f" (id {ident})" if ident is not None else ""),
            ident,
        )
    if q.min() < grid.omega_lo - tol or q.max() > grid.omega_hi + tol:
        raise OutOfDomain(
            f"quantiles span [{q.min():.6g}, {q.max():.6g}] outside "
            f"[{grid.omega_lo:.6g}, {grid.omega_hi:.6g}]"
            + (f" (id {ident})" if ident is not None else "")
        )
    q = np.maximum.accumulate(q)
    return np.clip(q, grid.omega_lo, grid.omega_hi)


def make_distribution(grid: Grid, q: Sequence[float], ident=None) -> GridDistribution:
    """Validate quantile values and wrap them as a distribution.

    Rounding-level decreases (below ``grid.tol_mono``) are repaired with a
    running maximum and values within tolerance of ``Omega`` are clamped.
    """
    q = _validate_quantiles(grid, np.asarray(q, dtype=float), ident)
    return GridDistribution(grid, _frozen(q))


def make_reference(dist: GridDistribution, jitter: bool = False) -> ReferenceMeasure:
    """Reference measure from ``dist``; ``jitter`` breaks quantile ties."""
    if not jitter:
        return ReferenceMeasure(dist)
    grid = dist.grid
    k = np.arange(1, grid.m + 1)
    q = dist.q + 1e-9 * grid.width * k / grid.m
    if q[-1] > grid.omega_hi:
        q = grid.omega_lo + (q - grid.omega_lo) * (grid.width / (q[-1] - grid.omega_lo))
    return ReferenceMeasure(GridDistribution(grid, _frozen(q)))


def uniform_distribution(grid: Grid) -> GridDistribution:
    return GridDistribution(grid, _frozen(grid.omega_lo + grid.width * grid.levels))


def wasserstein_distance(d1: GridDistribution, d2: GridDistribution) -> float:
    _same_grid(d1.grid, d2.grid)
    diff = d1.q - d2.q
    return float(np.sqrt(np.dot(diff, diff) / d1.grid.m))


def log_map(ref: ReferenceMeasure, mu: GridDistribution) -> TangentVector:
    _same_grid(ref.grid, mu.grid)
    return TangentVector(ref, _frozen(mu.q - ref.x))


def exp_map(ref: ReferenceMeasure, g: TangentVector) -> GridDistribution:
    _same_ref(ref, g.ref)
    grid = ref.grid
    q = g.v + ref.x
    if np.any(np.diff(q) < 0):
        q = np.sort(q)
    return GridDistribution(grid, _frozen(np.clip(q, grid.omega_lo, grid.omega_hi)))


def frechet_mean(ds: Sequence[GridDistribution], w: Sequence[float] | None = None) -> GridDistribution:
    """Weighted Wasserstein barycenter: the weighted mean of quantile functions."""
    if len(ds) == 0:
        raise EmptyInput("Frechet mean of an empty list")
    grid = ds[0].grid
    for d in ds[1:]:
        _same_grid(grid, d.grid)
    Q = np.stack([d.q for d in ds])
    if w is None:
        q = Q.mean(axis=0)
    else:
        w = np.asarray(w, dtype=float)
        if w.shape != (len(ds),) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        q = (w / w.sum()) @ Q
    q = np.clip(np.maximum.accumulate(q), grid.omega_lo, grid.omega_hi)
    return GridDistribution(grid, _frozen(q))


def tangent_inner(ref: ReferenceMeasure, g1: TangentVector, g2: TangentVector) -> float:
    _same_ref(ref, g1.ref)
    _same_ref(ref, g2.ref)
    return float(np.dot(g1.v, g2.v) / ref.grid.m)


def tangent_norm(ref: ReferenceMeasure, g: TangentVector) -> float:
    return float(np.sqrt(max(tangent_inner(ref, g, g), 0.0)))


def in_tangent_cone(ref: ReferenceMeasure, g: TangentVector) -> bool:
    _same_ref(ref, g.ref)
    grid = ref.grid
    tol = grid.tol_mono
    q = g.v + ref.x
    return bool(
        np.all(np.diff(q) >= -tol)
        and q.min() >= grid.omega_lo - tol
        and q.max() <= grid.omega_hi + tol
    )
