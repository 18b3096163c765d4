"""Sample-to-quantile estimation and every file format the package reads or writes.

CSV formats
-----------
samples (long):     ``id,value``          one row per measurement
quantiles (wide):   ``id,q1,...,qm``      one row per distribution
labels:             ``id,label``          labels are 1-based
multivariate:       ``id,x1,...,xd``      one row per d-dimensional measurement

Numbers are written with 17 significant digits so that a write/read cycle
reproduces float64 values exactly.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ColumnCountMismatch,
    EmptySamples,
    MissingHeader,
    NonMonotoneQuantiles,
    ParseError,
    WkccError,
)
from .geometry import Grid, GridDistribution, _frozen, make_distribution

log = logging.getLogger(__name__)

__all__ = [
    "SampleSet",
    "empirical_quantile_distribution",
    "read_samples_csv",
    "write_samples_csv",
    "read_quantiles_csv",
    "write_quantiles_csv",
    "read_labels_csv",
    "write_labels_csv",
    "read_multivariate_csv",
    "write_result_json",
    "read_result_json",
    "fmt",
    "IoError",
]


class IoError(WkccError):
    pass


def fmt(x) -> str:
    """Locale-independent decimal with 17 significant digits."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


@dataclass(frozen=True, eq=False)
class SampleSet:
    id: str
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 1 or self.values.size < 1:
            raise EmptySamples(f"sample set {self.id!r} is empty")
        if not np.all(np.isfinite(self.values)):
            raise ParseError(f"sample set {self.id!r} has non-finite values")


def empirical_quantile_distribution(s: SampleSet, grid: Grid, return_clamped: bool = False):
    """Left-continuous inverse of the empirical CDF at the grid levels.

    ``F^-1(u) = inf{x : F(x) >= u}`` is the ``ceil(u N)``-th order statistic.
    Quantiles outside Omega are clamped and counted.
    """
    if s.values.size == 0:
        raise EmptySamples(f"sample set {s.id!r} is empty")
    y = np.sort(s.values)
    N = y.size
    idx = np.ceil(grid.levels * N - 1e-9).astype(int) - 1
    q = y[np.clip(idx, 0, N - 1)]
    clamped = int(np.sum((q < grid.omega_lo) | (q > grid.omega_hi)))
    if clamped:
        log.warning("sample set %s: %d quantiles clamped into [%g, %g]", s.id, clamped, grid.omega_lo, grid.omega_hi)
    q = np.clip(q, grid.omega_lo, grid.omega_hi)
    dist = GridDistribution(grid, _frozen(q))
    return (dist, clamped) if return_clamped else dist


def _open_csv(path):
    try:
        return open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def read_samples_csv(path) -> list[SampleSet]:
    """Long-format ``id,value`` file, grouped by id in first-appearance order."""
    groups: dict[str, list[float]] = {}
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["id", "value"]:
            raise MissingHeader("expected header 'id,value'", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", line=lineno)
            try:
                value = float(row[1])
            except ValueError:
                raise ParseError(f"non-numeric value {row[1]!r}", line=lineno) from None
            if not math.isfinite(value):
                raise ParseError(f"non-finite value {row[1]!r}", line=lineno)
            groups.setdefault(row[0].strip(), []).append(value)
    return [SampleSet(k, np.asarray(v)) for k, v in groups.items()]


def write_samples_csv(path, sets: Iterable[SampleSet]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "value"])
        for s in sets:
            for v in s.values:
                w.writerow([s.id, fmt(v)])


def read_quantiles_csv(path, grid: Grid) -> tuple[list[str], list[GridDistribution]]:
    """Wide-format ``id,q1..qm`` file; returns ids and validated distributions."""
    ids, dists = [], []
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not header or header[0].strip().lower() != "id":
            raise MissingHeader("expected header 'id,q1,...,qm'", line=1)
        if len(header) - 1 != grid.m:
            raise ColumnCountMismatch(f"header has {len(header) - 1} quantile columns, grid has m={grid.m}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != grid.m + 1:
                raise ColumnCountMismatch(f"expected {grid.m + 1} fields, got {len(row)}", line=lineno)
            try:
                q = np.array([float(c) for c in row[1:]])
            except ValueError:
                raise ParseError("non-numeric quantile", line=lineno) from None
            ident = row[0].strip()
            try:
                dists.append(make_distribution(grid, q, ident=ident))
            except NonMonotoneQuantiles as exc:
                raise NonMonotoneQuantiles(f"line {lineno}: {exc}", ident) from None
            ids.append(ident)
    return ids, dists


def quantile_header_width(path) -> int:
    with _open_csv(path) as fh:
        header = next(csv.reader(fh), None)
    if not header:
        raise MissingHeader("empty file", line=1)
    return len(header) - 1


def write_quantiles_csv(path, ids: Sequence[str], qs) -> None:
    qs = [np.asarray(getattr(q, "q", q)) for q in qs]
    m = qs[0].shape[0] if qs else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"q{k}" for k in range(1, m + 1)])
        for ident, q in zip(ids, qs):
            w.writerow([ident] + [fmt(v) for v in q])


def read_labels_csv(path) -> dict[str, int]:
    out: dict[str, int] = {}
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["id", "label"]:
            raise MissingHeader("expected header 'id,label'", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out[row[0].strip()] = int(row[1])
            except (ValueError, IndexError):
                raise ParseError(f"bad label row {row!r}", line=lineno) from None
    return out


def write_labels_csv(path, ids: Sequence[str], labels) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"])
        for ident, lab in zip(ids, labels):
            w.writerow([ident, int(lab) + 1])


def read_multivariate_csv(path) -> list[tuple[str, np.ndarray]]:
    """``id,x1..xd`` rows grouped by id; returns (id, N_i x d array) pairs."""
    groups: dict[str, list[list[float]]] = {}
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[0].strip().lower() != "id":
            raise MissingHeader("expected header 'id,x1,...,xd'", line=1)
        d = len(header) - 1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise ColumnCountMismatch(f"expected {d + 1} fields, got {len(row)}", line=lineno)
            try:
                groups.setdefault(row[0].strip(), []).append([float(c) for c in row[1:]])
            except ValueError:
                raise ParseError("non-numeric coordinate", line=lineno) from None
    return [(k, np.asarray(v)) for k, v in groups.items()]


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_result_json(state, metadata: dict, path) -> None:
    """Serialize a clustering result; see README for the schema.

    ``state`` is any object with ``to_dict()`` (cluster states from
    :mod:`wkcc.clustering` and :mod:`wkcc.gaussian`) or a plain dict.
    """
    body = state.to_dict() if hasattr(state, "to_dict") else dict(state)
    doc = {"result": body, "metadata": metadata}
    try:
        Path(path).write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_result_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
