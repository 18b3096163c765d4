"""Simulation designs (I)-(VIII), replication generator and benchmark runner.

Each design mixes two clusters of distributions on [0, 1] built in the
tangent space at Uniform[0, 1]:

    g_i = mean^(c) + xi_1 phi_1^(c) + xi_2 phi_2^(c),   xi_j ~ U[-lam_j, lam_j],

and samples are drawn by push-forward, ``Y = g_i(U) + U`` with ``U`` uniform.
For a few designs the corner draws leave the tangent cone (``g + id`` is not
monotone); the push-forward is still a valid distribution and its quantile
function is the monotone rearrangement, which is what ``exp_map`` computes.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DomainError, UnknownDesign
from .geometry import Grid, GridDistribution, TangentVector, _frozen, exp_map
from .io import SampleSet, empirical_quantile_distribution, fmt

log = logging.getLogger(__name__)

__all__ = [
    "truncated_normal_quantile",
    "truncated_normal_cdf",
    "DesignSpec",
    "DESIGN_IDS",
    "make_design",
    "mean_function",
    "direction_functions",
    "tangent_function",
    "generate_replication",
    "replication_distributions",
    "METHODS",
    "run_benchmark",
    "write_benchmark",
    "mode_of_variation_export",
    "demo_dataset",
]


def _check_tn(mean, sd, lo, hi):
    if not sd > 0:
        raise DomainError(f"standard deviation must be positive, got {sd}")
    if not lo < hi:
        raise DomainError(f"empty truncation interval [{lo}, {hi}]")


def truncated_normal_cdf(x, mean, sd, lo, hi):
    _check_tn(mean, sd, lo, hi)
    a, b = (lo - mean) / sd, (hi - mean) / sd
    z = (np.clip(x, lo, hi) - mean) / sd
    if a > 0:
        # right tail: survival functions avoid cancellation
        return (ndtr(-a) - ndtr(-z)) / (ndtr(-a) - ndtr(-b))
    return (ndtr(z) - ndtr(a)) / (ndtr(b) - ndtr(a))


def truncated_normal_quantile(u, mean, sd, lo, hi):
    """Quantile of N(mean, sd^2) truncated to [lo, hi]; one Newton polish step."""
    _check_tn(mean, sd, lo, hi)
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise DomainError("quantile level must lie in (0, 1)")
    a, b = (lo - mean) / sd, (hi - mean) / sd
    if a > 0:
        # reflect into the left tail
        return 2 * mean - truncated_normal_quantile(1.0 - u, mean, sd, 2 * mean - hi, 2 * mean - lo)
    Pa, Pb = ndtr(a), ndtr(b)
    mass = Pb - Pa
    z = np.clip(ndtri(Pa + u * mass), a, b)
    pdf = np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
    resid = (ndtr(z) - Pa) / mass - u
    z = np.where(pdf > 1e-300, z - resid * mass / np.maximum(pdf, 1e-300), z)
    z = np.clip(z, a, b)
    out = mean + sd * z
    return float(out) if out.ndim == 0 else out


# --- designs -----------------------------------------------------------------

_SQRT2 = np.sqrt(2.0)
THETA1 = (0.04, 0.001)
THETA2 = (0.02, 0.0133)

_MEANS: dict[str, Callable] = {
    "f1": lambda x: truncated_normal_quantile(x, 0.75, 0.3, 0.0, 1.0) - x,
    "f2": lambda x: truncated_normal_quantile(x, 0.75, 0.25, 0.0, 1.0) - x,
    "f3": lambda x: truncated_normal_quantile(x, 0.65, 0.25, 0.0, 1.0) - x,
    "phi11/10": lambda x: _SQRT2 * np.sin(2 * np.pi * x) / 10,
    "phi11/15": lambda x: _SQRT2 * np.sin(2 * np.pi * x) / 15,
}

_DIRECTIONS: dict[str, tuple[Callable, Callable]] = {
    "E1": (lambda x: _SQRT2 * np.sin(2 * np.pi * x), lambda x: _SQRT2 * np.sin(8 * np.pi * x)),
    "E2": (lambda x: _SQRT2 * np.sin(4 * np.pi * x), lambda x: _SQRT2 * np.sin(6 * np.pi * x)),
}


@dataclass(frozen=True)
class DesignSpec:
    id: str
    mean_fns: tuple[str, str]
    direction_sets: tuple[str, str]
    lambdas: tuple[tuple[float, float], tuple[float, float]]

    def __post_init__(self):
        for lam in self.lambdas:
            if not lam[0] >= lam[1] > 0:
                raise ValueError(f"design {self.id}: need lambda1 >= lambda2 > 0, got {lam}")

    @property
    def lambda1(self):
        return self.lambdas[0]

    @property
    def lambda2(self):
        return self.lambdas[1]


_HALF_THETA1 = (THETA1[0] / 2, THETA1[1] / 2)

_TABLE = {
    "I": (("f1", "f1"), ("E1", "E2"), (_HALF_THETA1, THETA2)),
    "II": (("f1", "f1"), ("E1", "E2"), (THETA1, THETA2)),
    "III": (("f1", "f2"), ("E1", "E1"), (THETA1, THETA1)),
    "IV": (("f1", "f2"), ("E1", "E2"), (THETA1, THETA2)),
    "V": (("f1", "f3"), ("E1", "E1"), (THETA1, THETA1)),
    "VI": (("f1", "f3"), ("E1", "E2"), (THETA1, THETA2)),
    "VII": (("phi11/10", "phi11/15"), ("E1", "E1"), (THETA1, THETA1)),
    "VIII": (("phi11/10", "phi11/15"), ("E1", "E2"), (THETA1, THETA2)),
}
DESIGN_IDS = tuple(_TABLE)


def make_design(design_id: str) -> DesignSpec:
    key = str(design_id).strip().upper()
    if key not in _TABLE:
        raise UnknownDesign(f"unknown design {design_id!r}; expected one of {', '.join(DESIGN_IDS)}")
    means, dirs, lams = _TABLE[key]
    return DesignSpec(key, means, dirs, lams)


def mean_function(name: str) -> Callable:
    return _MEANS[name]


def direction_functions(name: str) -> tuple[Callable, Callable]:
    return _DIRECTIONS[name]


def tangent_function(spec: DesignSpec, c: int, xi: Sequence[float]) -> Callable:
    """``x -> g(x)`` for cluster ``c`` (0-based) with coefficients ``xi``."""
    mfn = _MEANS[spec.mean_fns[c]]
    p1, p2 = _DIRECTIONS[spec.direction_sets[c]]
    return lambda x: mfn(x) + xi[0] * p1(x) + xi[1] * p2(x)


def _draw_item(spec: DesignSpec, N: int, seed: int, rep: int, i: int, lam_scale: float):
    rng = np.random.default_rng([seed, rep, i])
    c = int(rng.integers(2))
    lam = spec.lambdas[c]
    xi = (rng.uniform(-lam[0], lam[0]) * lam_scale, rng.uniform(-lam[1], lam[1]) * lam_scale)
    U = rng.random(N)
    return c, xi, tangent_function(spec, c, xi)(U) + U


def generate_replication(spec: DesignSpec, n: int, N: int, seed: int, rep: int = 0, lam_scale: float = 1.0):
    """Sample sets and true (0-based) labels for one replication.

    Item ``i`` depends only on ``(seed, rep, i)``, so any parallel schedule
    reproduces the serial dataset.  ``lam_scale`` shrinks the coefficient
    ranges (0 gives every item the cluster mean).
    """
    if n < 2 or N < 1:
        raise ValueError("need n >= 2 and N >= 1")
    sets, labels, coefs = [], [], []
    for i in range(n):
        c, xi, y = _draw_item(spec, N, seed, rep, i, lam_scale)
        sets.append(SampleSet(f"d{i + 1:04d}", y))
        labels.append(c)
        coefs.append(xi)
    return sets, np.asarray(labels), np.asarray(coefs)


def replication_distributions(sets: Sequence[SampleSet], grid: Grid) -> list[GridDistribution]:
    return [empirical_quantile_distribution(s, grid) for s in sets]


def population_quantiles(spec: DesignSpec, c: int, xi, grid: Grid) -> GridDistribution:
    """Exact grid quantiles of ``Exp(g)`` at Uniform[0, 1]: sorted ``g(u) + u``."""
    u = grid.levels
    q = np.sort(tangent_function(spec, c, xi)(u) + u)
    return GridDistribution(grid, _frozen(np.clip(q, grid.omega_lo, grid.omega_hi)))


# --- benchmark ----------------------------------------------------------------

METHODS = ("CPCA", "kCDC", "WkM", "WkM_0.01", "WkM_0.05", "WkM_0.1")


def _method_labels(method, ds, K, M, cfg, seed):
    from . import clustering as cl

    if method == "CPCA":
        return cl.cpca_cluster(ds, cfg, M=M).labels
    if method == "kCDC":
        return cl.kcdc_cluster(ds, cfg, M=M).labels
    if method == "WkM":
        return cl.wasserstein_kmeans(ds, K, cfg.kmeans, seed=seed)
    if method.startswith("WkM_"):
        return cl.trimmed_wasserstein_kmeans(ds, K, float(method[4:]), cfg.kmeans, seed=seed)
    raise ValueError(f"unknown method {method!r}")


def _run_one(task):
    from threadpoolctl import threadpool_limits

    from . import clustering as cl
    from .metrics import adjusted_rand_index, correct_classification_rate

    design_id, rep, methods, n, N, m, seed, cfg, timing = task
    with threadpool_limits(1):
        spec = make_design(design_id)
        sets, truth, _ = generate_replication(spec, n, N, seed, rep)
        grid = Grid(m, 0.0, 1.0)
        ds = replication_distributions(sets, grid)
        M = None
        if any(meth in ("CPCA", "kCDC") for meth in methods):
            M = cl.select_dimension(cl.reference_for(ds, cfg), ds, cfg.tau, cfg.solver)
        rows = []
        for method in methods:
            t0 = time.perf_counter()
            labels = _method_labels(method, ds, 2, M, cfg, seed + rep)
            secs = time.perf_counter() - t0
            rows.append(
                {
                    "design": design_id,
                    "method": method,
                    "rep": rep,
                    "crate": correct_classification_rate(labels, truth),
                    "arand": adjusted_rand_index(labels, truth),
                    "seconds": secs if timing else None,
                    "M": M,
                }
            )
    return rows


def run_benchmark(designs, methods=METHODS, reps=25, n=100, N=2000, seed=0, cfg=None, m=1000, workers=1, timing=False):
    """Per-replication rows for every design x method; ordered by (design, rep, method)."""
    from .clustering import KcdcConfig

    cfg = cfg or KcdcConfig(K=2, tau=0.9)
    designs = [make_design(d).id for d in designs]
    for meth in methods:
        if meth not in METHODS:
            raise ValueError(f"unknown method {meth!r}; expected a subset of {METHODS}")
    tasks = [(d, r, tuple(methods), n, N, m, seed, cfg, timing) for d in designs for r in range(reps)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_one, tasks))
    else:
        chunks = [_run_one(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def summarize(rows, designs, methods):
    out = []
    for d in designs:
        for meth in methods:
            sel = [r for r in rows if r["design"] == d and r["method"] == meth]
            if not sel:
                continue
            out.append(
                {
                    "design": d,
                    "method": meth,
                    "reps": len(sel),
                    "crate": float(np.mean([r["crate"] for r in sel])),
                    "arand": float(np.mean([r["arand"] for r in sel])),
                }
            )
    return out


def write_benchmark(rows, out_dir, designs, methods) -> dict:
    """Write replications.csv, summary.csv and table3.csv; return their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {k: out_dir / f"{k}.csv" for k in ("replications", "summary", "table3")}
    with open(paths["replications"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["design", "method", "rep", "crate", "arand", "seconds"])
        for r in rows:
            w.writerow(
                [r["design"], r["method"], r["rep"], fmt(r["crate"]), fmt(r["arand"]),
                 "" if r["seconds"] is None else f"{r['seconds']:.3f}"]
            )
    summary = summarize(rows, designs, methods)
    with open(paths["summary"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["design", "method", "reps", "crate", "arand"])
        for s in summary:
            w.writerow([s["design"], s["method"], s["reps"], fmt(s["crate"]), fmt(s["arand"])])
    with open(paths["table3"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["design", "metric", *methods])
        for d in designs:
            by = {s["method"]: s for s in summary if s["design"] == d}
            if not by:
                continue
            for metric in ("crate", "arand"):
                w.writerow([d, metric] + [f"{by[mm][metric]:.3f}" if mm in by else "" for mm in methods])
    return paths


def mode_of_variation_export(pg, alphas: Sequence[float]) -> list[GridDistribution]:
    """``Exp(mean + alpha sqrt(lambda_1) phi_1)`` for each alpha.

    ``lambda_1`` is the (population) variance of the first constrained scores.
    """
    model = pg.model
    lam1 = float(np.var(model.scores[:, 0])) if model.scores.size else 0.0
    phi = model.directions[0].v
    out = []
    for a in alphas:
        v = model.mean.v + float(a) * np.sqrt(lam1) * phi
        out.append(exp_map(pg.ref, TangentVector(pg.ref, _frozen(v))))
    return out


def demo_dataset(n_per: int = 20, N: int = 400, seed: int = 0):
    """Two well-separated families of distributions on [0, 1].

    Family 1 is uniform on ``[0.05 + s, 0.45 + s]``, family 2 a Beta(5, 2)
    sample squeezed into ``[0.5 + s, 0.95 + s]``, with ``|s| <= 0.03``.  The
    two supports never overlap, so any sensible clustering recovers them.
    Returns (sample sets with ids ``demo01``.., 0-based labels).
    """
    rng = np.random.default_rng(seed)
    sets, labels = [], []
    for i in range(2 * n_per):
        c = i % 2
        s = rng.uniform(-0.03, 0.03)
        if c == 0:
            x = 0.05 + s + 0.4 * rng.random(N)
        else:
            x = 0.5 + s + 0.45 * rng.beta(5.0, 2.0, N)
        sets.append(SampleSet(f"demo{i + 1:02d}", x))
        labels.append(c)
    return sets, np.array(labels)
