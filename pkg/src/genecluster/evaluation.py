"""Silhouette widths (Rousseeuw) over Euclidean distance.

For point ``i`` in cluster ``A``::

    a(i) = mean distance from i to the other members of A
    b(i) = min over non-empty clusters C != A of the mean distance from i to C
    s(i) = (b(i) - a(i)) / max(a(i), b(i))

Points in singleton clusters get ``s(i) = 0``, as does the 0/0 case where
``a(i) = b(i) = 0``.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from ._io import atomic_write_text, dumps_json
from .errors import DataError

_CHUNK = 512


@dataclass(frozen=True, eq=False)
class SilhouetteReport:
    per_point: np.ndarray
    per_cluster_mean: np.ndarray  # nan for empty clusters
    overall_mean: float
    n_singletons: int

    def to_dict(self) -> dict:
        return {
            "overall_mean": float(self.overall_mean),
            "per_cluster_mean": [
                None if math.isnan(v) else float(v) for v in self.per_cluster_mean
            ],
            "per_point": [float(v) for v in self.per_point],
            "n_singletons": int(self.n_singletons),
        }

    def to_json(self) -> str:
        return dumps_json(self.to_dict())

    def to_csv(self, gene_ids: Sequence[str], assignments) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["gene_id", "cluster", "s_value"])
        for gene, c, s in zip(gene_ids, assignments, self.per_point):
            writer.writerow([gene, int(c), repr(float(s))])
        return buf.getvalue()

    def write(self, json_path: str | os.PathLike, csv_path: str | os.PathLike,
              gene_ids: Sequence[str], assignments) -> tuple[Path, Path]:
        return (
            atomic_write_text(json_path, self.to_json()),
            atomic_write_text(csv_path, self.to_csv(gene_ids, assignments)),
        )


def _validate(points, assignments, k: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    labels = np.asarray(assignments)
    if x.ndim != 2 or labels.shape != (x.shape[0],):
        raise DataError(f"{labels.shape[0]} assignments for {x.shape[0]} points")
    if x.shape[0] < 2:
        raise DataError("silhouette needs at least 2 points")
    if k < 2:
        raise DataError(f"silhouette needs k >= 2, got {k}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise DataError("assignments must be integers")
    if labels.min() < 0 or labels.max() >= k:
        raise DataError(f"assignments must lie in [0, {k})")
    if np.unique(labels).size < 2:
        raise DataError("silhouette is undefined with fewer than 2 non-empty clusters")
    return x, labels.astype(np.intp)


def _report(s: np.ndarray, labels: np.ndarray, k: int, counts: np.ndarray) -> SilhouetteReport:
    with np.errstate(invalid="ignore", divide="ignore"):
        per_cluster = np.bincount(labels, weights=s, minlength=k) / counts
    return SilhouetteReport(
        per_point=s,
        per_cluster_mean=np.where(counts > 0, per_cluster, np.nan),
        overall_mean=float(np.mean(s)),
        n_singletons=int(np.sum(counts == 1)),
    )


def silhouette(points, assignments, k: int) -> SilhouetteReport:
    """Silhouette report, computed in row blocks of the distance matrix.

    Memory stays at ``O(block * n)``; per-cluster distance sums come from one
    matrix product per block.
    """
    x, labels = _validate(points, assignments, k)
    n = x.shape[0]
    counts = np.bincount(labels, minlength=k)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    s = np.empty(n)
    for start in range(0, n, _CHUNK):
        rows = np.arange(start, min(start + _CHUNK, n))
        sums = cdist(x[rows], x) @ onehot
        own = labels[rows]
        own_size = counts[own]
        with np.errstate(invalid="ignore", divide="ignore"):
            a = sums[np.arange(rows.size), own] / (own_size - 1)
            mean_to = sums / counts
        mean_to[:, counts == 0] = np.inf
        mean_to[np.arange(rows.size), own] = np.inf
        b = mean_to.min(axis=1)
        denom = np.maximum(a, b)
        with np.errstate(invalid="ignore", divide="ignore"):
            si = (b - a) / denom
        si[(own_size == 1) | (denom == 0)] = 0.0
        s[rows] = si
    return _report(s, labels, k, counts)


def silhouette_bruteforce(points, assignments, k: int) -> SilhouetteReport:
    """Reference implementation: a literal loop over every pair of points.

    O(n^2) distance evaluations in pure Python; meant as a test oracle.
    """
    x, labels = _validate(points, assignments, k)
    rows = [tuple(float(v) for v in r) for r in x]
    lab = [int(c) for c in labels]
    n = len(rows)
    s = np.zeros(n)
    for i in range(n):
        totals = [0.0] * k
        sizes = [0] * k
        for j in range(n):
            sizes[lab[j]] += 1
            if j != i:
                totals[lab[j]] += math.dist(rows[i], rows[j])
        own = lab[i]
        if sizes[own] == 1:
            continue
        a = totals[own] / (sizes[own] - 1)
        b = min(totals[c] / sizes[c] for c in range(k) if c != own and sizes[c] > 0)
        if max(a, b) > 0:
            s[i] = (b - a) / max(a, b)
    per_cluster = np.full(k, np.nan)
    singletons = 0
    for c in range(k):
        members = [s[i] for i in range(n) if lab[i] == c]
        if members:
            per_cluster[c] = sum(members) / len(members)
        singletons += len(members) == 1
    return SilhouetteReport(s, per_cluster, sum(s) / n, singletons)
