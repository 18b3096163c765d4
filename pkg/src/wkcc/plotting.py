"""Figures for the CLI report paths (written next to the CSV/JSON outputs).

Uses the object-oriented matplotlib API with the Agg canvas only, so
nothing here touches pyplot state or needs a display.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.figure import Figure

__all__ = [
    "plot_clustered_quantiles",
    "plot_ev_curve",
    "plot_modes",
    "plot_benchmark",
    "plot_covariance_ellipses",
]

_PALETTE = ("#1b6ca8", "#d1495b", "#66a182", "#edae49", "#6c4f77", "#2e4057")


def _figure(width=6.0, height=4.0):
    fig = Figure(figsize=(width, height), layout="constrained")
    ax = fig.add_subplot(1, 1, 1)
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    return fig, ax


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # drop the software/date stamps so reruns produce the same bytes
    meta = {"Software": None} if path.suffix.lower() == ".png" else {"Creator": None, "CreationDate": None}
    fig.savefig(path, dpi=120, metadata=meta)
    return path


def plot_clustered_quantiles(levels, quantiles, labels, path, title="Quantile functions by cluster") -> Path:
    """One line per distribution, coloured by (0-based) cluster label."""
    fig, ax = _figure()
    Q = np.asarray(quantiles)
    labels = np.asarray(labels)
    for c in np.unique(labels):
        colour = _PALETTE[int(c) % len(_PALETTE)]
        rows = Q[labels == c]
        for k, q in enumerate(rows):
            ax.plot(levels, q, color=colour, lw=0.6, alpha=0.5, label=f"cluster {int(c) + 1}" if k == 0 else None)
    ax.set_xlabel("quantile level u")
    ax.set_ylabel("quantile")
    ax.set_title(title)
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_ev_curve(ev, path, tau=None) -> Path:
    fig, ax = _figure(5.0, 3.5)
    ev = np.asarray(ev)
    ks = np.arange(1, ev.size + 1)
    ax.plot(ks, ev, "o-", color=_PALETTE[0])
    if tau is not None:
        ax.axhline(tau, color="0.5", ls="--", lw=1)
    ax.set_xticks(ks)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("number of directions")
    ax.set_ylabel("explained variation")
    return _save(fig, path)


def plot_modes(levels, curves: Sequence, alphas: Sequence[float], path, title="Mode of variation") -> Path:
    """Quantile functions along the first mode, one line per alpha."""
    fig, ax = _figure()
    span = max(1e-12, max(abs(a) for a in alphas))
    for a, q in zip(alphas, curves):
        shade = 0.15 + 0.7 * abs(a) / span
        colour = _PALETTE[1] if a > 0 else _PALETTE[0]
        if a == 0:
            ax.plot(levels, q, color="k", lw=1.5, label="alpha = 0")
        else:
            ax.plot(levels, q, color=colour, lw=1.0, alpha=shade, label=f"alpha = {a:g}")
    ax.set_xlabel("quantile level u")
    ax.set_ylabel("quantile")
    ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_benchmark(summary: Sequence[dict], path, metric="crate") -> Path:
    """Grouped bars: one group per design, one bar per method."""
    designs = list(dict.fromkeys(r["design"] for r in summary))
    methods = list(dict.fromkeys(r["method"] for r in summary))
    fig, ax = _figure(max(6.0, 1.2 * len(designs) + 2), 4.0)
    width = 0.8 / max(1, len(methods))
    x = np.arange(len(designs))
    for j, meth in enumerate(methods):
        vals = [next((r[metric] for r in summary if r["design"] == d and r["method"] == meth), np.nan) for d in designs]
        ax.bar(x + (j - (len(methods) - 1) / 2) * width, vals, width, label=meth, color=_PALETTE[j % len(_PALETTE)])
    ax.set_xticks(x, designs)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel(metric)
    ax.legend(frameon=False, fontsize=8, ncol=min(3, len(methods)))
    return _save(fig, path)


def plot_covariance_ellipses(covs: Sequence[np.ndarray], labels, path, dims=(0, 1)) -> Path:
    """Unit-Mahalanobis ellipses of the 2-d marginal ``dims`` of each covariance."""
    fig, ax = _figure(5.0, 5.0)
    t = np.linspace(0, 2 * np.pi, 100)
    circle = np.stack([np.cos(t), np.sin(t)])
    i, j = dims
    reach = 0.0
    for S, c in zip(covs, labels):
        sub = np.asarray(S)[np.ix_([i, j], [i, j])]
        lam, U = np.linalg.eigh(sub)
        pts = U @ (np.sqrt(np.clip(lam, 0, None))[:, None] * circle)
        reach = max(reach, float(np.abs(pts).max()))
        ax.plot(pts[0], pts[1], color=_PALETTE[int(c) % len(_PALETTE)], lw=0.7, alpha=0.6)
    ax.set_aspect("equal")
    lim = 1.05 * max(reach, 1e-12)
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_xlabel(f"x{i + 1}")
    ax.set_ylabel(f"x{j + 1}")
    return _save(fig, path)
