"""Cluster-quality measures: correct classification rate, adjusted Rand index, silhouette."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyInput, LengthMismatch, SingleCluster
from .geometry import GridDistribution, _same_grid

__all__ = [
    "Partition",
    "contingency",
    "correct_classification_rate",
    "adjusted_rand_index",
    "wasserstein_distance_matrix",
    "silhouette",
]


@dataclass(frozen=True, eq=False)
class Partition:
    """Labels canonicalized to 0..K-1 in order of first appearance."""

    labels: np.ndarray

    def __post_init__(self):
        if self.labels.ndim != 1 or self.labels.size < 1:
            raise EmptyInput("a partition needs at least one item")

    @classmethod
    def of(cls, labels) -> "Partition":
        if isinstance(labels, Partition):
            return labels
        raw = np.asarray(labels).ravel()
        _, first, inv = np.unique(raw, return_index=True, return_inverse=True)
        rank = np.argsort(np.argsort(first))
        return cls(rank[inv].astype(int))

    @property
    def n(self):
        return self.labels.size

    @property
    def K(self):
        return int(self.labels.max()) + 1


def contingency(pred, truth) -> np.ndarray:
    p, t = Partition.of(pred), Partition.of(truth)
    if p.n != t.n:
        raise LengthMismatch(f"partitions have {p.n} and {t.n} items")
    table = np.zeros((p.K, t.K), dtype=np.int64)
    np.add.at(table, (p.labels, t.labels), 1)
    return table


def correct_classification_rate(pred, truth) -> float:
    """Best accuracy over label matchings (rectangular tables are zero-padded)."""
    table = contingency(pred, truth)
    k = max(table.shape)
    padded = np.zeros((k, k), dtype=np.int64)
    padded[: table.shape[0], : table.shape[1]] = table
    rows, cols = linear_sum_assignment(padded, maximize=True)
    return float(padded[rows, cols].sum()) / float(table.sum())


def _pairs(x):
    x = np.asarray(x, dtype=float)
    return float(np.sum(x * (x - 1) / 2.0))


def adjusted_rand_index(pred, truth) -> float:
    """Hubert-Arabie adjusted Rand index; 1.0 when the expected index is already maximal."""
    table = contingency(pred, truth)
    n = int(table.sum())
    sum_ij = _pairs(table)
    sum_a = _pairs(table.sum(axis=1))
    sum_b = _pairs(table.sum(axis=0))
    total = n * (n - 1) / 2.0
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    top = 0.5 * (sum_a + sum_b) - expected
    if top == 0:
        # both partitions trivial (all-one or all-singletons) and identical
        return 1.0
    return (sum_ij - expected) / top


def wasserstein_distance_matrix(ds: Sequence[GridDistribution]) -> np.ndarray:
    if not ds:
        raise EmptyInput("no distributions")
    for d in ds[1:]:
        _same_grid(ds[0].grid, d.grid)
    Q = np.stack([d.q for d in ds])
    sq = (Q * Q).sum(1)
    G = sq[:, None] - 2.0 * Q @ Q.T + sq[None, :]
    D = np.sqrt(np.maximum(G, 0.0) / ds[0].grid.m)
    np.fill_diagonal(D, 0.0)
    return D


def silhouette(ds: Sequence[GridDistribution], labels, distances: np.ndarray | None = None) -> float:
    """Mean silhouette width under d_W; singleton clusters contribute 0.

    ``distances`` may carry a precomputed d_W matrix (reused across K scans).
    """
    p = Partition.of(labels)
    if len(ds) != p.n:
        raise LengthMismatch(f"{len(ds)} distributions but {p.n} labels")
    if p.K < 2:
        raise SingleCluster("silhouette is undefined for a single cluster")
    D = wasserstein_distance_matrix(ds) if distances is None else distances
    lab = p.labels
    sizes = np.bincount(lab, minlength=p.K)
    sums = np.stack([D[:, lab == c].sum(axis=1) for c in range(p.K)], axis=1)
    idx = np.arange(p.n)
    own = sizes[lab]
    a = np.where(own > 1, sums[idx, lab] / np.maximum(own - 1, 1), 0.0)
    mean_other = sums / sizes[None, :]
    mean_other[idx, lab] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())
