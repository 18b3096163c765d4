"""Bures-Wasserstein geometry of centred Gaussians and k-centres clustering of covariances.

The tangent space at a positive-definite ``S*`` consists of symmetric
matrices ``V`` with inner product ``tr(V1 S* V2)``; ``Log`` returns the
optimal transport map minus the identity, and the image of ``Log`` is the
cone ``{V : V + I psd}``.  Clustering reuses the k-centres loop of
:mod:`wkcc.clustering` in orthonormal coordinates of that inner product,
with the tangent norm as the reclassification criterion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clustering import KcdcConfig, _Space, _select_from_workspace, run_kcentres
from .cones import PsdCone
from .cpca import SolverOptions
from .errors import (
    DimensionMismatch,
    DimensionTooLarge,
    EmptyInput,
    NoConvergence,
    SingularReference,
    TooFewPoints,
)

__all__ = [
    "Covariance",
    "SymTangent",
    "make_covariance",
    "sample_covariance",
    "bures_distance",
    "gauss_log",
    "gauss_exp",
    "sym_inner",
    "sym_norm",
    "in_psd_cone",
    "gauss_frechet_mean",
    "SymCoordinates",
    "GaussClusterState",
    "gauss_kcentres",
]


def _sym(A):
    return 0.5 * (A + A.T)


def _eig_fn(S, fn):
    lam, U = np.linalg.eigh(_sym(S))
    return (U * fn(np.clip(lam, 0.0, None))) @ U.T


def _sqrtm(S):
    return _eig_fn(S, np.sqrt)


@dataclass(frozen=True, eq=False)
class Covariance:
    S: np.ndarray

    @property
    def d(self):
        return self.S.shape[0]


def make_covariance(S) -> Covariance:
    """Validate symmetry and clip tiny negative eigenvalues to zero."""
    S = np.array(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] < 1:
        raise DimensionMismatch(f"covariance must be square, got shape {S.shape}")
    scale = max(1.0, float(np.abs(S).max()))
    if np.abs(S - S.T).max() > 1e-12 * scale:
        raise ValueError("covariance matrix is not symmetric")
    lam, U = np.linalg.eigh(_sym(S))
    if lam.min() < -1e-10 * scale:
        raise ValueError(f"covariance has negative eigenvalue {lam.min():.3g}")
    S = (U * np.clip(lam, 0.0, None)) @ U.T
    S = _sym(S)
    S.setflags(write=False)
    return Covariance(S)


def sample_covariance(X) -> Covariance:
    """Centred covariance with divisor N (means are subtracted first)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise EmptyInput("need at least one d-dimensional observation")
    R = X - X.mean(axis=0)
    return make_covariance(R.T @ R / X.shape[0])


@dataclass(frozen=True, eq=False)
class SymTangent:
    refcov: Covariance
    V: np.ndarray


def _same_d(*covs):
    d = covs[0].d
    for c in covs[1:]:
        if c.d != d:
            raise DimensionMismatch(f"dimensions {d} and {c.d} differ")


def bures_distance(S1: Covariance, S2: Covariance) -> float:
    """``min_U ||S1^1/2 - S2^1/2 U||_F`` over orthogonal U.

    Equal to ``sqrt(tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2))`` but evaluated as
    the norm of a difference, so nearby matrices do not lose digits to
    cancellation.  The optimal U is the polar factor of ``S2^1/2 S1^1/2``.
    """
    _same_d(S1, S2)
    X, Y = _sqrtm(S1.S), _sqrtm(S2.S)
    W, _, Vt = np.linalg.svd(Y @ X)
    return float(np.linalg.norm(X - Y @ (W @ Vt)))


def _ref_roots(Sstar: Covariance):
    lam, U = np.linalg.eigh(Sstar.S)
    if lam.min() <= 1e-12 * max(lam.max(), 1e-300):
        raise SingularReference("reference covariance must be positive definite")
    return (U * np.sqrt(lam)) @ U.T, (U / np.sqrt(lam)) @ U.T


def gauss_log(Sstar: Covariance, S: Covariance) -> SymTangent:
    _same_d(Sstar, S)
    h, hinv = _ref_roots(Sstar)
    T = hinv @ _sqrtm(h @ S.S @ h) @ hinv
    return SymTangent(Sstar, _sym(T) - np.eye(Sstar.d))


def gauss_exp(Sstar: Covariance, V: SymTangent) -> Covariance:
    A = _sym(V.V) + np.eye(Sstar.d)
    return Covariance(_sym(A @ Sstar.S @ A))


def sym_inner(Sstar: Covariance, V1: SymTangent, V2: SymTangent) -> float:
    return float(np.trace(V1.V @ Sstar.S @ V2.V))


def sym_norm(Sstar: Covariance, V: SymTangent) -> float:
    return float(np.sqrt(max(sym_inner(Sstar, V, V), 0.0)))


def in_psd_cone(V: SymTangent, tol: float = 1e-10) -> bool:
    return bool(np.linalg.eigvalsh(_sym(V.V) + np.eye(V.V.shape[0])).min() >= -tol)


def gauss_frechet_mean(Ss: Sequence[Covariance], tol: float = 1e-12, max_iter: int = 1000) -> Covariance:
    """Fixed point of ``S <- Tbar S Tbar`` (Tbar: mean optimal map from S).

    Starts from the arithmetic mean and stops when the Frobenius change is at
    most ``tol * max(1, ||S||_F)``.  On failure raises :class:`NoConvergence`
    carrying the last iterate.
    """
    if not Ss:
        raise EmptyInput("no covariances")
    _same_d(*Ss)
    d = Ss[0].d
    S = _sym(np.mean([c.S for c in Ss], axis=0))
    for _ in range(max_iter):
        h, hinv = _ref_roots(Covariance(S))
        Tbar = np.mean([hinv @ _sqrtm(h @ c.S @ h) @ hinv for c in Ss], axis=0)
        Tbar = _sym(Tbar)
        new = _sym(Tbar @ S @ Tbar)
        step = float(np.linalg.norm(new - S))
        S = new
        if step <= tol * max(1.0, float(np.linalg.norm(S))):
            return make_covariance(S)
    raise NoConvergence(f"Bures mean did not converge in {max_iter} iterations", result=Covariance(S))


class SymCoordinates:
    """Orthonormal coordinates on Sym(d) for the inner product ``tr(V1 S* V2)``.

    With the Frobenius-orthonormal basis F_a of Sym(d) and Gram matrix
    ``G_ab = tr(F_a S* F_b) = L L^T``, the coordinates of ``V`` are
    ``L^T c`` where ``c_a = <F_a, V>_F``.
    """

    def __init__(self, Sstar: Covariance):
        d = Sstar.d
        self.d = d
        F = []
        for i in range(d):
            for j in range(i, d):
                E = np.zeros((d, d))
                if i == j:
                    E[i, i] = 1.0
                else:
                    E[i, j] = E[j, i] = 1.0 / np.sqrt(2.0)
                F.append(E)
        self.F = np.stack(F)
        G = np.einsum("aij,jk,bki->ab", self.F, Sstar.S, self.F)
        self.L = np.linalg.cholesky(_sym(G))
        Linv_T = np.linalg.inv(self.L).T
        # basis[b] = sum_a (L^-T)_ab F_a, so that V = sum_b y_b basis[b]
        self.basis = np.einsum("ab,aij->bij", Linv_T, self.F)

    @property
    def P(self):
        return self.F.shape[0]

    def coords(self, V) -> np.ndarray:
        c = np.einsum("aij,ij->a", self.F, V)
        return self.L.T @ c

    def matrix(self, y) -> np.ndarray:
        return np.tensordot(np.asarray(y, dtype=float), self.basis, axes=1)


class _GaussSpace(_Space):
    def __init__(self, Sstar: Covariance, covs: Sequence[Covariance], opts: SolverOptions):
        self.Sstar = Sstar
        self.coordinates = SymCoordinates(Sstar)
        Y = np.stack([self.coordinates.coords(gauss_log(Sstar, c).V) for c in covs])
        super().__init__(Y, PsdCone(self.coordinates.basis), opts)


@dataclass(frozen=True, eq=False)
class GaussClusterState:
    labels: np.ndarray  # 0-based
    reference: Covariance
    means: tuple  # per-cluster mean covariance, Exp of the mean tangent vector
    directions: tuple  # per cluster: (M, d, d) tangent directions, or None
    M: int
    iteration: int
    objective: float
    reason: str = ""
    history: tuple = ()

    def to_dict(self):
        return {
            "labels": (self.labels + 1).tolist(),
            "M": self.M,
            "iterations": self.iteration,
            "objective": self.objective,
            "objective_history": list(self.history),
            "convergence": self.reason,
            "reference": self.reference.S,
            "clusters": [
                {
                    "label": c + 1,
                    "size": int(np.sum(self.labels == c)),
                    "mean_covariance": self.means[c].S,
                    "directions": [] if self.directions[c] is None else list(self.directions[c]),
                }
                for c in range(len(self.means))
            ],
        }


def gauss_kcentres(Ss: Sequence[Covariance], K: int, M: int | None, cfg: KcdcConfig | None = None) -> GaussClusterState:
    """k-centres clustering of covariance matrices at their Bures mean.

    ``M=None`` selects the dimension by explained variation (``cfg.tau``).
    """
    cfg = cfg or KcdcConfig(K=K)
    if not Ss:
        raise EmptyInput("no covariances")
    Sstar = gauss_frechet_mean(Ss)
    ws = _GaussSpace(Sstar, Ss, cfg.solver)
    P = ws.coordinates.P
    if M is None:
        M = _select_from_workspace(ws, cfg.tau)
    if not 1 <= M <= P:
        raise DimensionTooLarge(f"M={M} outside 1..d(d+1)/2={P}")
    if len(Ss) < K * cfg.floor(M):
        raise TooFewPoints(f"{len(Ss)} covariances cannot fill {K} clusters of at least {cfg.floor(M)}")
    labels, fits, iteration, obj, reason, history = run_kcentres(ws, K, M, cfg)
    means, dirs = [], []
    for c in range(K):
        members = np.flatnonzero(labels == c)
        ybar = ws.Y[members].mean(axis=0)
        means.append(gauss_exp(Sstar, SymTangent(Sstar, ws.coordinates.matrix(ybar))))
        fit = fits[c]
        dirs.append(None if fit is None else np.stack([ws.coordinates.matrix(p) for p in fit.directions]))
    return GaussClusterState(np.asarray(labels), Sstar, tuple(means), tuple(dirs), M, iteration, obj, reason, history)
