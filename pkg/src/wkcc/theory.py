"""Monte-Carlo checks of when the k-centres rule assigns a distribution correctly.

Everything is expressed in J-dimensional coordinates: the tangent-space
quantities involved are inner products between the random element, the
cluster means and the principal directions, so an orthonormal basis stands
in for the function space.  Scores are independent centred Gaussians with
the given variances.

Two situations are covered:

* common mean, where the first direction of the other cluster equals the
  ``ell``-th direction of the generating cluster.  The correct-assignment
  event has the closed form ``0.5 + arcsin((V1 - Vl) / (V1 + Vl)) / pi``;
* common covariance with means differing by ``delta_m``.  The
  probability is bounded below by ``Phi(|delta_m| / (2 sqrt(V1)))`` when
  ``delta_m`` is orthogonal to the first direction.

Draws landing exactly on the event boundary count as one half (with
``delta_m = 0`` every draw does, giving the symmetric value 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import SpecError

__all__ = ["TheorySpec", "TheoryResult", "theory_mc_common_mean", "theory_mc_common_cov"]


@dataclass(frozen=True)
class TheorySpec:
    variances: tuple  # Var(xi_j), j = 1..J, non-increasing
    ell: int = 2  # 1-based index with rho_ell^(c) = rho_1^(d)
    delta_m: tuple = ()  # m^(c) - m^(d) in direction coordinates (common-covariance case)
    draws: int = 100_000
    seed: int = 0

    def __post_init__(self):
        v = np.asarray(self.variances, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise SpecError("need at least one variance")
        if np.any(v <= 0):
            raise SpecError("variances must be positive")
        if np.any(np.diff(v) > 0):
            raise SpecError("variances must be non-increasing")
        if not 1 <= self.ell <= v.size:
            raise SpecError(f"ell={self.ell} outside 1..{v.size}")
        if self.delta_m and len(self.delta_m) != v.size:
            raise SpecError(f"delta_m has {len(self.delta_m)} entries, expected {v.size}")
        if self.draws < 1:
            raise SpecError("need at least one draw")

    @property
    def J(self):
        return len(self.variances)


@dataclass(frozen=True)
class TheoryResult:
    kind: str
    mc: float
    reference: float  # closed form (common mean) or lower bound (common covariance)
    se: float
    draws: int
    identifiable: bool = True
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "kind": self.kind,
            "mc": self.mc,
            "reference": self.reference,
            "se": self.se,
            "draws": self.draws,
            "identifiable": self.identifiable,
            "params": self.params,
        }


def _scores(spec: TheorySpec):
    rng = np.random.default_rng(spec.seed)
    sd = np.sqrt(np.asarray(spec.variances, dtype=float))
    return rng.standard_normal((spec.draws, spec.J)) * sd


def _rate(lhs, rhs):
    hits = np.where(lhs > rhs, 1.0, np.where(lhs == rhs, 0.5, 0.0))
    p = float(hits.mean())
    return p, float(np.sqrt(max(p * (1 - p), 0.0) / hits.size))


def theory_mc_common_mean(spec: TheorySpec) -> TheoryResult:
    if spec.ell < 2:
        raise SpecError("the common-mean case needs ell >= 2")
    xi = _scores(spec)
    k = spec.ell - 1
    # <g - m, rho1c + rho1d> and <g - m, rho1c - rho1d> share a strict sign
    a = xi[:, 0] + xi[:, k]
    b = xi[:, 0] - xi[:, k]
    p, se = _rate(a * b, 0.0)
    v1, vl = spec.variances[0], spec.variances[k]
    closed = 0.5 + np.arcsin((v1 - vl) / (v1 + vl)) / np.pi
    return TheoryResult("common-mean", p, float(closed), se, spec.draws, True, {"V1": v1, "Vl": vl, "ell": spec.ell})


def theory_mc_common_cov(spec: TheorySpec) -> TheoryResult:
    if not spec.delta_m:
        raise SpecError("the common-covariance case needs delta_m")
    dm = np.asarray(spec.delta_m, dtype=float)
    xi = _scores(spec)
    along = dm[0]
    norm = float(np.linalg.norm(dm))
    identifiable = not (norm > 0 and np.linalg.norm(dm[1:]) <= 1e-12 * norm)
    psi = 2.0 * dm
    psi[0] -= 2.0 * along
    p, se = _rate(xi @ psi, along**2 - norm**2)
    bound = float(ndtr(norm / (2.0 * np.sqrt(spec.variances[0]))))
    return TheoryResult(
        "common-covariance", p, bound, se, spec.draws, identifiable, {"delta_m": list(dm), "V1": spec.variances[0]}
    )
