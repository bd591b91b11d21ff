"""Gene-expression matrices: loading, writing, missing-value removal and
synthetic blob generation.

Rows are genes and columns are conditions (samples, time points).
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._io import atomic_write_text
from .errors import DataError, EmptyResultError

DEFAULT_MISSING_TOKENS = frozenset({"", "NA"})


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _check_unique(labels: Sequence[str], kind: str) -> None:
    seen: set[str] = set()
    for label in labels:
        if label in seen:
            raise DataError(f"duplicate {kind} id {label!r}")
        seen.add(label)


@dataclass(frozen=True, eq=False)
class ExpressionMatrix:
    """Dense genes x conditions matrix with labels and a missing-value mask.

    Missing cells hold ``nan`` in ``values`` and ``True`` in ``missing_mask``.
    Arrays are copied and made read-only on construction.
    """

    gene_ids: tuple[str, ...]
    condition_ids: tuple[str, ...]
    values: np.ndarray
    missing_mask: np.ndarray

    def __post_init__(self) -> None:
        gene_ids = tuple(str(g) for g in self.gene_ids)
        condition_ids = tuple(str(c) for c in self.condition_ids)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError(f"values must be 2-D, got shape {values.shape}")
        mask = np.asarray(self.missing_mask, dtype=bool)
        shape = (len(gene_ids), len(condition_ids))
        if values.shape != shape or mask.shape != shape:
            raise DataError(
                f"shape mismatch: labels imply {shape}, values {values.shape}, mask {mask.shape}"
            )
        _check_unique(gene_ids, "gene")
        _check_unique(condition_ids, "condition")
        values = np.where(mask, np.nan, values)
        bad = ~mask & ~np.isfinite(values)
        if bad.any():
            i, j = map(int, np.argwhere(bad)[0])
            raise DataError(
                f"non-finite value at gene {gene_ids[i]!r}, condition {condition_ids[j]!r}"
            )
        object.__setattr__(self, "gene_ids", gene_ids)
        object.__setattr__(self, "condition_ids", condition_ids)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "missing_mask", _frozen(mask))

    @classmethod
    def from_array(
        cls,
        values,
        gene_ids: Iterable[str] | None = None,
        condition_ids: Iterable[str] | None = None,
    ) -> "ExpressionMatrix":
        """Wrap a dense array; ``nan`` cells become missing."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        n, m = values.shape
        genes = tuple(gene_ids) if gene_ids is not None else default_gene_ids(n)
        conds = tuple(condition_ids) if condition_ids is not None else default_condition_ids(m)
        return cls(genes, conds, values, np.isnan(values))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_genes(self) -> int:
        return len(self.gene_ids)

    @property
    def n_conditions(self) -> int:
        return len(self.condition_ids)

    def has_missing(self) -> bool:
        return bool(self.missing_mask.any())

    def take_genes(self, rows) -> "ExpressionMatrix":
        rows = np.asarray(rows, dtype=np.intp)
        return ExpressionMatrix(
            tuple(self.gene_ids[i] for i in rows),
            self.condition_ids,
            self.values[rows],
            self.missing_mask[rows],
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExpressionMatrix):
            return NotImplemented
        return (
            self.gene_ids == other.gene_ids
            and self.condition_ids == other.condition_ids
            and np.array_equal(self.missing_mask, other.missing_mask)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class DatasetSummary:
    n_genes_raw: int
    n_genes_kept: int
    n_conditions: int
    n_missing_cells: int

    def __post_init__(self) -> None:
        counts = (self.n_genes_raw, self.n_genes_kept, self.n_conditions, self.n_missing_cells)
        if min(counts) < 0 or self.n_genes_kept > self.n_genes_raw:
            raise ValueError(f"inconsistent dataset summary: {self}")


def default_gene_ids(n: int) -> tuple[str, ...]:
    width = max(4, len(str(n)))
    return tuple(f"g{i + 1:0{width}d}" for i in range(n))


def default_condition_ids(m: int) -> tuple[str, ...]:
    width = max(2, len(str(m)))
    return tuple(f"c{j + 1:0{width}d}" for j in range(m))


def _sniff_delimiter(path: Path) -> str:
    return "\t" if path.suffix.lower() in {".tsv", ".tab", ".txt"} else ","


def load_matrix(
    path: str | os.PathLike,
    delimiter: str | None = None,
    missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS,
    has_header: bool = True,
) -> ExpressionMatrix:
    """Load a delimited genes x conditions table.

    The first row holds condition ids (its first cell is ignored) and the
    first column holds gene ids. Cells equal to one of ``missing_tokens``
    (after stripping whitespace) are recorded as missing, never imputed.

    Parameters
    ----------
    path : path-like
        CSV/TSV file, UTF-8.
    delimiter : str, optional
        Field separator. Defaults to tab for ``.tsv``/``.tab``/``.txt`` files
        and comma otherwise.
    missing_tokens : iterable of str
        Tokens treated as missing values.
    has_header : bool
        When False, condition ids are generated as ``c01, c02, ...``.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    DataError
        On ragged rows, unparseable cells, non-finite numbers or duplicate ids.
    """
    path = Path(path)
    if delimiter is None:
        delimiter = _sniff_delimiter(path)
    tokens = frozenset(t.strip() for t in missing_tokens)
    with path.open("r", encoding="utf-8", newline="") as fh:
        return _parse_rows(csv.reader(fh, delimiter=delimiter), tokens, has_header, str(path))


def loads_matrix(
    text: str,
    delimiter: str = ",",
    missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS,
    has_header: bool = True,
) -> ExpressionMatrix:
    """Same as :func:`load_matrix` but parses an in-memory string."""
    tokens = frozenset(t.strip() for t in missing_tokens)
    reader = csv.reader(io.StringIO(text, newline=""), delimiter=delimiter)
    return _parse_rows(reader, tokens, has_header, "<string>")


def _parse_rows(reader, tokens: frozenset[str], has_header: bool, source: str) -> ExpressionMatrix:
    condition_ids: list[str] | None = None
    gene_ids: list[str] = []
    rows: list[list[float]] = []
    mask_rows: list[list[bool]] = []
    seen_genes: dict[str, int] = {}

    for lineno, record in enumerate(reader, start=1):
        if not record or all(not cell.strip() for cell in record):
            continue
        if condition_ids is None and has_header:
            condition_ids = [c.strip() for c in record[1:]]
            if not condition_ids:
                raise DataError(f"{source}:{lineno}: header has no condition columns")
            try:
                _check_unique(condition_ids, "condition")
            except DataError as exc:
                raise DataError(f"{source}:{lineno}: {exc}") from None
            continue
        if condition_ids is None:
            condition_ids = list(default_condition_ids(len(record) - 1))
        expected = len(condition_ids) + 1
        if len(record) != expected:
            raise DataError(
                f"{source}:{lineno}: expected {expected} fields, found {len(record)}"
            )
        gene = record[0].strip()
        if gene in seen_genes:
            raise DataError(
                f"{source}:{lineno}: duplicate gene id {gene!r} (first seen on line {seen_genes[gene]})"
            )
        seen_genes[gene] = lineno
        values: list[float] = []
        missing: list[bool] = []
        for cond, cell in zip(condition_ids, record[1:]):
            cell = cell.strip()
            if cell in tokens:
                values.append(math.nan)
                missing.append(True)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{source}:{lineno}: non-numeric value {cell!r} at gene {gene!r}, condition {cond!r}"
                ) from None
            if not math.isfinite(v):
                raise DataError(
                    f"{source}:{lineno}: non-finite value {cell!r} at gene {gene!r}, condition {cond!r}"
                )
            values.append(v)
            missing.append(False)
        gene_ids.append(gene)
        rows.append(values)
        mask_rows.append(missing)

    if condition_ids is None:
        raise DataError(f"{source}: no data")
    m = len(condition_ids)
    values_arr = np.array(rows, dtype=np.float64).reshape(len(rows), m)
    mask_arr = np.array(mask_rows, dtype=bool).reshape(len(rows), m)
    return ExpressionMatrix(tuple(gene_ids), tuple(condition_ids), values_arr, mask_arr)


def format_matrix(
    m: ExpressionMatrix, delimiter: str = ",", corner: str = "gene_id"
) -> str:
    """Serialise to the loader's format. ``repr`` of each float round-trips exactly."""
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow([corner, *m.condition_ids])
    for gene, row, miss in zip(m.gene_ids, m.values, m.missing_mask):
        writer.writerow([gene, *("" if mi else repr(float(v)) for v, mi in zip(row, miss))])
    return buf.getvalue()


def write_matrix(m: ExpressionMatrix, path: str | os.PathLike, delimiter: str = ",") -> Path:
    return atomic_write_text(path, format_matrix(m, delimiter))


def drop_incomplete_genes(m: ExpressionMatrix) -> tuple[ExpressionMatrix, DatasetSummary]:
    """Remove every gene with at least one missing cell, preserving row order."""
    complete = ~m.missing_mask.any(axis=1)
    kept = np.flatnonzero(complete)
    if kept.size == 0:
        raise EmptyResultError(
            f"all {m.n_genes} genes have missing values; nothing left to cluster"
        )
    summary = DatasetSummary(
        n_genes_raw=m.n_genes,
        n_genes_kept=int(kept.size),
        n_conditions=m.n_conditions,
        n_missing_cells=int(m.missing_mask.sum()),
    )
    if kept.size == m.n_genes:
        return m, summary
    return m.take_genes(kept), summary


def synthesize_blobs(
    n_genes: int,
    n_conditions: int,
    k_true: int,
    spread: float,
    seed: int,
    separation: float = 20.0,
) -> tuple[ExpressionMatrix, np.ndarray]:
    """Draw isotropic Gaussian blobs around ``k_true`` well-separated centres.

    Uses numpy's PCG64 generator (``np.random.default_rng(seed)``), so output is
    bit-identical for a given seed on any platform.

    Centres sit on the vertices of a scaled simplex, ``scale * (e_i - 1/2)``
    with ``scale = separation * spread``: coordinate ``i`` is ``+scale/2`` and
    every other coordinate ``-scale/2``. Inter-centre distance is therefore
    ``scale * sqrt(2)``, every centre has a distinct sign pattern and column
    means stay away from zero. When ``k_true > n_conditions`` the simplex does
    not fit, and centres are drawn as ``scale``-scaled standard normals,
    resampled until all pairwise distances exceed ``spread``.

    Cluster sizes are balanced (they differ by at most one gene) and gene
    order is shuffled. Returns the matrix and the per-gene true labels.
    """
    if n_conditions < 1:
        raise DataError(f"n_conditions must be >= 1, got {n_conditions}")
    if k_true < 1 or n_genes < k_true:
        raise DataError(f"need n_genes >= k_true >= 1, got n_genes={n_genes}, k_true={k_true}")
    if not spread > 0 or not math.isfinite(spread):
        raise DataError(f"spread must be a positive finite number, got {spread}")
    if not separation > 0:
        raise DataError(f"separation must be positive, got {separation}")

    rng = np.random.default_rng(seed)
    scale = separation * spread
    labels = rng.permutation(np.arange(n_genes) % k_true)

    if k_true <= n_conditions:
        centers = scale * (np.eye(k_true, n_conditions) - 0.5)
    else:
        for _ in range(100):
            centers = scale * rng.standard_normal((k_true, n_conditions))
            diff = centers[:, None, :] - centers[None, :, :]
            dist = np.sqrt((diff**2).sum(-1))
            np.fill_diagonal(dist, np.inf)
            if dist.min() > spread:
                break
        else:
            raise DataError(
                f"could not place {k_true} centres in {n_conditions} dimensions "
                f"further apart than spread={spread}"
            )

    values = centers[labels] + spread * rng.standard_normal((n_genes, n_conditions))
    matrix = ExpressionMatrix(
        default_gene_ids(n_genes),
        default_condition_ids(n_conditions),
        values,
        np.zeros((n_genes, n_conditions), dtype=bool),
    )
    return matrix, labels
