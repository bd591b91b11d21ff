"""Euclidean K-Means with random or closest-pair (CCIA) seeding.

All tie-breaks are deterministic: nearest centroid with the lowest index,
closest pair with the lexicographically smallest ``(i, j)``, nearest
remaining point with the lowest index.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from ._io import atomic_write_text, dumps_json
from .errors import DataError

Strategy = Literal["random", "ccia"]

DEFAULT_MAX_ITERS = 300
DEFAULT_TOL = 1e-6
_CHUNK = 512


def as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DataError(f"points must be a 2-D array, got shape {x.shape}")
    if x.shape[0] == 0:
        raise DataError("empty point set")
    if not np.isfinite(x).all():
        raise DataError("points contain non-finite values")
    return x


def euclidean(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DataError(f"dimension mismatch: {x.shape} vs {y.shape}")
    # math.dist rescales, so subnormal differences do not square to zero
    return math.dist(x.ravel().tolist(), y.ravel().tolist())


def sq_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, summed from coordinate differences.

    Differences (rather than the ``|a|^2 - 2ab + |b|^2`` expansion) keep
    exact ties exact, which the tie-breaking rules depend on.
    """
    return cdist(a, b, "sqeuclidean")


@dataclass(frozen=True, eq=False)
class CentroidSet:
    centroids: np.ndarray
    strategy_tag: Strategy
    seed: int | None = None

    def __post_init__(self) -> None:
        c = np.array(self.centroids, dtype=np.float64, copy=True)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1:
            raise DataError(f"need at least one centroid, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CentroidSet):
            return NotImplemented
        return (
            self.strategy_tag == other.strategy_tag
            and self.seed == other.seed
            and np.array_equal(self.centroids, other.centroids)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class ClusteringResult:
    assignments: np.ndarray
    centroids: CentroidSet
    sse: float
    iterations: int
    converged: bool
    stop_reason: str
    sse_history: tuple[float, ...] = field(default=())
    n_reseeded: int = 0

    @property
    def k(self) -> int:
        return self.centroids.k

    def to_dict(self) -> dict:
        return {
            "assignments": [int(a) for a in self.assignments],
            "centroids": self.centroids.centroids.tolist(),
            "sse": float(self.sse),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "stop_reason": self.stop_reason,
            "n_reseeded": int(self.n_reseeded),
            "strategy_tag": self.centroids.strategy_tag,
            "seed": self.centroids.seed,
        }

    def to_json(self) -> str:
        return dumps_json(self.to_dict())

    def assignments_csv(self, gene_ids: Sequence[str]) -> str:
        if len(gene_ids) != len(self.assignments):
            raise DataError("gene id count does not match assignments")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["gene_id", "cluster_index"])
        for gene, a in zip(gene_ids, self.assignments):
            writer.writerow([gene, int(a)])
        return buf.getvalue()

    def write(self, json_path: str | os.PathLike, csv_path: str | os.PathLike,
              gene_ids: Sequence[str]) -> tuple[Path, Path]:
        return (
            atomic_write_text(json_path, self.to_json()),
            atomic_write_text(csv_path, self.assignments_csv(gene_ids)),
        )


# --- initialisation -----------------------------------------------------------


def random_init(points, k: int, seed: int) -> CentroidSet:
    """Pick ``k`` distinct data points uniformly without replacement.

    Duplicated points count once. Sampling uses ``np.random.default_rng(seed)``.
    """
    x = as_points(points)
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    _, first = np.unique(x, axis=0, return_index=True)
    distinct = x[np.sort(first)]
    if k > distinct.shape[0]:
        raise DataError(
            f"k={k} exceeds the number of distinct points ({distinct.shape[0]})"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(distinct.shape[0], size=k, replace=False)
    return CentroidSet(distinct[chosen], "random", int(seed))


def ccia_target_size(n: int, k: int) -> int:
    """Seed-set size: ``ceil(0.75 * n / k)``, but never fewer than 2."""
    return max(2, -(-3 * n // (4 * k)))


def _nearest_alive(x: np.ndarray, rows: np.ndarray, alive: np.ndarray):
    """Nearest alive neighbour (excluding self) of each row; ties go to the lowest index."""
    cols = np.flatnonzero(alive)
    dist = np.full(rows.size, np.inf)
    nbr = np.full(rows.size, -1, dtype=np.intp)
    if cols.size == 0:
        return dist, nbr
    for start in range(0, rows.size, _CHUNK):
        r = rows[start:start + _CHUNK]
        d = sq_distances(x[r], x[cols])
        d[r[:, None] == cols[None, :]] = np.inf
        best = np.argmin(d, axis=1)
        dist[start:start + r.size] = d[np.arange(r.size), best]
        nbr[start:start + r.size] = cols[best]
    return dist, nbr


def ccia_seed_sets(points, k: int) -> list[np.ndarray]:
    """Build the ``k`` closest-pair seed sets, each as an array of point indices.

    Each set starts from the closest pair of not-yet-used points and then
    repeatedly absorbs the unused point nearest to the set (minimum distance
    to any member) until it holds :func:`ccia_target_size` points. Points left
    over after ``k`` sets belong to none of them.

    Nearest neighbours are cached and only recomputed for points whose cached
    neighbour has been used, so no ``n x n`` matrix is materialised.
    """
    x = as_points(points)
    n = x.shape[0]
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if k > n:
        raise DataError(f"k={k} exceeds the number of points ({n})")
    target = ccia_target_size(n, k)

    alive = np.ones(n, dtype=bool)
    nn_dist, nn_idx = _nearest_alive(x, np.arange(n), alive)
    sets: list[np.ndarray] = []
    for m in range(k):
        remaining = int(alive.sum())
        if remaining < target:
            raise DataError(
                f"CCIA seed set {m + 1} of {k} needs {target} points but only "
                f"{remaining} remain (n={n}); use fewer clusters or more data"
            )
        i = int(np.argmin(np.where(alive, nn_dist, np.inf)))
        j = int(nn_idx[i])
        members = [min(i, j), max(i, j)]
        alive[members] = False
        link = np.minimum(
            sq_distances(x[members[0]:members[0] + 1], x)[0],
            sq_distances(x[members[1]:members[1] + 1], x)[0],
        )
        while len(members) < target:
            p = int(np.argmin(np.where(alive, link, np.inf)))
            members.append(p)
            alive[p] = False
            np.minimum(link, sq_distances(x[p:p + 1], x)[0], out=link)
        sets.append(np.array(members, dtype=np.intp))

        stale = np.flatnonzero(alive & ~alive[nn_idx.clip(min=0)])
        if stale.size:
            nn_dist[stale], nn_idx[stale] = _nearest_alive(x, stale, alive)
    return sets


def ccia_init(points, k: int) -> CentroidSet:
    """Deterministic initial centroids: the means of the closest-pair seed sets."""
    x = as_points(points)
    centroids = np.empty((k, x.shape[1]))
    for m, members in enumerate(ccia_seed_sets(x, k)):
        block = x[members]
        # fixed summation order, independent of input row order
        block = block[np.lexsort(block.T[::-1])]
        centroids[m] = block.mean(axis=0)
    return CentroidSet(centroids, "ccia")


# --- Lloyd iterations ---------------------------------------------------------


def assign(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, float]:
    """Nearest-centroid labels (lowest index on ties) and the resulting SSE."""
    labels = np.empty(x.shape[0], dtype=np.intp)
    best = np.empty(x.shape[0])
    for start in range(0, x.shape[0], 4096):
        d = sq_distances(x[start:start + 4096], centroids)
        lab = np.argmin(d, axis=1)
        labels[start:start + 4096] = lab
        best[start:start + 4096] = d[np.arange(lab.size), lab]
    return labels, float(best.sum())


def _update(x: np.ndarray, labels: np.ndarray, old: np.ndarray) -> tuple[np.ndarray, int]:
    k = old.shape[0]
    centroids = old.copy()
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts):
        centroids[c] = x[labels == c].mean(axis=0)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        # re-seed each empty cluster with the point farthest from its own centroid
        far = np.sum((x - centroids[labels]) ** 2, axis=1)
        order = np.argsort(-far, kind="stable")
        for c, p in zip(empty, order):
            centroids[c] = x[p]
    return centroids, int(empty.size)


def kmeans(
    points,
    init: CentroidSet,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> ClusteringResult:
    """Lloyd's algorithm from the given initial centroids.

    Alternates nearest-centroid assignment and mean update. Stops when an
    assignment step changes no label (``stop_reason="assignments"``), when
    no centroid moved more than ``tol`` in the last update
    (``"tolerance"``), or after ``max_iters`` updates (``"max_iters"``,
    ``converged=False``). A cluster left empty by an assignment step is
    re-seeded at the point farthest from its assigned centroid.

    ``sse_history`` holds the SSE after every assignment step, starting with
    the one against ``init``; ``sse`` is its last entry.
    """
    x = as_points(points)
    n, dim = x.shape
    if init.dim != dim:
        raise DataError(f"centroid dimension {init.dim} does not match points ({dim})")
    if init.k > n:
        raise DataError(f"K={init.k} exceeds the number of points ({n})")
    if max_iters < 0 or tol < 0:
        raise DataError("max_iters and tol must be non-negative")

    centroids = np.array(init.centroids)
    labels, sse = assign(x, centroids)
    history = [sse]
    iterations = 0
    reseeded = 0
    reason = "max_iters"
    while iterations < max_iters:
        new_centroids, n_empty = _update(x, labels, centroids)
        reseeded += n_empty
        iterations += 1
        shift = float(np.sqrt(np.max(np.sum((new_centroids - centroids) ** 2, axis=1))))
        centroids = new_centroids
        new_labels, sse = assign(x, centroids)
        history.append(sse)
        unchanged = np.array_equal(new_labels, labels)
        labels = new_labels
        if unchanged:
            reason = "assignments"
            break
        if shift <= tol:
            reason = "tolerance"
            break

    return ClusteringResult(
        assignments=labels,
        centroids=CentroidSet(centroids, init.strategy_tag, init.seed),
        sse=sse,
        iterations=iterations,
        converged=reason != "max_iters",
        stop_reason=reason,
        sse_history=tuple(history),
        n_reseeded=reseeded,
    )


def canonical_labels(labels) -> np.ndarray:
    """Relabel clusters in order of first appearance (0, 1, 2, ...)."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.intp)
    rank[np.argsort(first)] = np.arange(first.size)
    return rank[inverse]
