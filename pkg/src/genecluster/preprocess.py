"""Normalisation and discretisation of expression matrices.

Four pipelines turn an :class:`ExpressionMatrix` into a matrix of integer
regulation codes:

=======  ==========================  =================================
method   normalisation               discretisation
=======  ==========================  =================================
1        z-score per gene            sign of first value, then sign of
                                     each step between adjacent conditions
2        min-max per gene to [0, 1]  four fixed quartile bins, codes 1..4
3        divide by column mean       k equal-width bins, codes 1..k
4        unit Euclidean norm per     sign of each value
         gene
=======  ==========================  =================================

Bins are left-closed and right-open, except the last bin which also takes
its upper edge.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np

from ._io import atomic_write_text
from .errors import DataError, DegenerateDataError
from .matrix import ExpressionMatrix

Scheme = Literal["z-score", "min-max", "column-mean", "row-unit"]

METHOD_SCHEMES: dict[int, Scheme] = {
    1: "z-score",
    2: "min-max",
    3: "column-mean",
    4: "row-unit",
}
DEFAULT_BINS = 4
_RANGE_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NormalizedMatrix:
    gene_ids: tuple[str, ...]
    condition_ids: tuple[str, ...]
    values: np.ndarray
    scheme_tag: Scheme
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (len(self.gene_ids), len(self.condition_ids)):
            raise DataError(f"values shape {values.shape} does not match labels")
        if not np.isfinite(values).all():
            raise DataError(f"{self.scheme_tag} normalisation produced non-finite values")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class DiscretizedMatrix:
    """Integer regulation codes, one row (pattern) per gene."""

    gene_ids: tuple[str, ...]
    condition_ids: tuple[str, ...]
    codes: np.ndarray
    alphabet: tuple[int, ...]
    method_tag: int
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        codes = np.asarray(self.codes)
        if codes.shape != (len(self.gene_ids), len(self.condition_ids)):
            raise DataError(f"codes shape {codes.shape} does not match labels")
        codes = codes.astype(np.int64)
        if codes.size and not np.isin(codes, self.alphabet).all():
            raise DataError(f"codes outside alphabet {self.alphabet}")
        object.__setattr__(self, "codes", _frozen(codes))
        object.__setattr__(self, "alphabet", tuple(int(a) for a in self.alphabet))

    @property
    def shape(self) -> tuple[int, int]:
        return self.codes.shape

    def as_points(self) -> np.ndarray:
        """Codes as float vectors, the form consumed by clustering."""
        return self.codes.astype(np.float64)

    def metadata(self) -> dict[str, Any]:
        return {
            "method": self.method_tag,
            "normalization": METHOD_SCHEMES[self.method_tag],
            "alphabet": list(self.alphabet),
            "params": dict(self.params),
            "n_genes": len(self.gene_ids),
            "n_conditions": len(self.condition_ids),
        }


def _require_complete(m: ExpressionMatrix) -> None:
    if m.has_missing():
        i, j = map(int, np.argwhere(m.missing_mask)[0])
        raise DataError(
            f"missing value at gene {m.gene_ids[i]!r}, condition {m.condition_ids[j]!r}; "
            "drop incomplete genes first"
        )


def _require_scheme(nm: NormalizedMatrix, scheme: Scheme) -> None:
    if nm.scheme_tag != scheme:
        raise DataError(f"expected {scheme} normalised data, got {nm.scheme_tag}")


# --- Method I -----------------------------------------------------------------


def zscore_normalize(m: ExpressionMatrix) -> NormalizedMatrix:
    """Standardise each gene to mean 0 and population standard deviation 1.

    Genes with no spread (constant, or a standard deviation that underflows
    to 0) map to all zeros.
    """
    _require_complete(m)
    if m.n_conditions < 2:
        raise DegenerateDataError("z-score needs at least 2 conditions per gene")
    x = m.values
    mu = x.mean(axis=1, keepdims=True)
    sigma = x.std(axis=1, keepdims=True)
    constant = (x.max(axis=1) == x.min(axis=1))[:, None] | (sigma == 0)
    z = np.where(constant, 0.0, (x - mu) / np.where(constant, 1.0, sigma))
    return NormalizedMatrix(m.gene_ids, m.condition_ids, z, "z-score")


def discretize_method1(nm: NormalizedMatrix) -> DiscretizedMatrix:
    """First condition: sign of the value. Later conditions: +1 when the value
    rose from the previous condition, -1 when it fell, 0 when unchanged."""
    _require_scheme(nm, "z-score")
    if nm.shape[1] < 1:
        raise DataError("method 1 needs at least one condition")
    z = nm.values
    codes = np.empty(z.shape, dtype=np.int64)
    codes[:, 0] = np.sign(z[:, 0])
    codes[:, 1:] = np.sign(z[:, 1:] - z[:, :-1])
    return DiscretizedMatrix(nm.gene_ids, nm.condition_ids, codes, (-1, 0, 1), 1)


# --- Method II ----------------------------------------------------------------


def minmax_normalize(
    m: ExpressionMatrix, new_min: float = 0.0, new_max: float = 1.0
) -> NormalizedMatrix:
    """Linearly map each gene's [min, max] onto [new_min, new_max]."""
    _require_complete(m)
    if not new_min < new_max:
        raise DataError(f"new_min ({new_min}) must be below new_max ({new_max})")
    x = m.values
    lo = x.min(axis=1, keepdims=True)
    hi = x.max(axis=1, keepdims=True)
    flat = np.flatnonzero(hi[:, 0] == lo[:, 0])
    if flat.size:
        raise DegenerateDataError(
            f"gene {m.gene_ids[flat[0]]!r} is constant; min-max normalisation divides by zero"
        )
    v = (x - lo) / (hi - lo) * (new_max - new_min) + new_min
    return NormalizedMatrix(
        m.gene_ids, m.condition_ids, v, "min-max",
        {"new_min": float(new_min), "new_max": float(new_max)},
    )


_QUARTILE_EDGES = np.array([0.25, 0.5, 0.75])


def discretize_method2(nm: NormalizedMatrix) -> DiscretizedMatrix:
    """Quartile bins of the unit interval: [0, .25) -> 1, [.25, .5) -> 2,
    [.5, .75) -> 3, [.75, 1] -> 4."""
    _require_scheme(nm, "min-max")
    if (nm.params.get("new_min", 0.0), nm.params.get("new_max", 1.0)) != (0.0, 1.0):
        raise DataError("method 2 requires min-max normalisation onto [0, 1]")
    v = nm.values
    if v.size and (v.min() < -_RANGE_TOL or v.max() > 1 + _RANGE_TOL):
        raise DataError(f"values outside [0, 1]: range [{v.min()}, {v.max()}]")
    codes = np.searchsorted(_QUARTILE_EDGES, v, side="right") + 1
    return DiscretizedMatrix(nm.gene_ids, nm.condition_ids, codes, (1, 2, 3, 4), 2)


# --- Method III ---------------------------------------------------------------


def column_mean_normalize(m: ExpressionMatrix) -> NormalizedMatrix:
    """Divide every column by its arithmetic mean."""
    _require_complete(m)
    means = m.values.mean(axis=0)
    zero = np.flatnonzero(means == 0)
    if zero.size:
        raise DegenerateDataError(
            f"condition {m.condition_ids[zero[0]]!r} has mean 0; cannot scale by it"
        )
    return NormalizedMatrix(m.gene_ids, m.condition_ids, m.values / means, "column-mean")


def equal_width_codes(values: np.ndarray, k: int, v_min: float, v_max: float) -> np.ndarray:
    """Bin ``values`` into ``k`` equal-width bins spanning [v_min, v_max]; codes 1..k."""
    width = (v_max - v_min) / k
    edges = v_min + width * np.arange(1, k)
    return np.minimum(np.searchsorted(edges, values, side="right") + 1, k)


def discretize_method3(
    nm: NormalizedMatrix,
    k: int = DEFAULT_BINS,
    scope: Literal["global", "column"] = "global",
) -> DiscretizedMatrix:
    """Equal-width binning into ``k`` bins of width ``(v_max - v_min) / k``.

    With ``scope="global"`` the range is taken over the whole matrix; with
    ``scope="column"`` each condition is binned over its own range.
    """
    if nm.scheme_tag != "column-mean":
        raise DataError(f"expected column-mean normalised data, got {nm.scheme_tag}")
    if int(k) != k or k < 1:
        raise DataError(f"number of bins must be a positive integer, got {k}")
    k = int(k)
    v = nm.values
    if scope == "global":
        v_min, v_max = float(v.min()), float(v.max())
        if k > 1 and v_min == v_max:
            raise DegenerateDataError("matrix is constant; cannot form more than one bin")
        codes = equal_width_codes(v, k, v_min, v_max)
    elif scope == "column":
        codes = np.empty(v.shape, dtype=np.int64)
        for j in range(v.shape[1]):
            col = v[:, j]
            lo, hi = float(col.min()), float(col.max())
            if k > 1 and lo == hi:
                raise DegenerateDataError(
                    f"condition {nm.condition_ids[j]!r} is constant; cannot form {k} bins"
                )
            codes[:, j] = equal_width_codes(col, k, lo, hi)
    else:
        raise DataError(f"unknown binning scope {scope!r}")
    return DiscretizedMatrix(
        nm.gene_ids, nm.condition_ids, codes, tuple(range(1, k + 1)), 3,
        {"bins": k, "scope": scope},
    )


# --- Method IV ----------------------------------------------------------------


def row_unit_normalize(m: ExpressionMatrix) -> NormalizedMatrix:
    """Scale each gene to unit Euclidean norm."""
    _require_complete(m)
    norms = np.linalg.norm(m.values, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateDataError(f"gene {m.gene_ids[zero[0]]!r} has zero norm")
    return NormalizedMatrix(m.gene_ids, m.condition_ids, m.values / norms[:, None], "row-unit")


def discretize_method4(nm: NormalizedMatrix) -> DiscretizedMatrix:
    _require_scheme(nm, "row-unit")
    codes = np.sign(nm.values).astype(np.int64)
    return DiscretizedMatrix(nm.gene_ids, nm.condition_ids, codes, (-1, 0, 1), 4)


# --- pipelines and export -----------------------------------------------------


def discretize(
    m: ExpressionMatrix, method: int, bins: int = DEFAULT_BINS, scope: str = "global"
) -> DiscretizedMatrix:
    """Run normalisation + discretisation for ``method`` in 1..4."""
    if method == 1:
        return discretize_method1(zscore_normalize(m))
    if method == 2:
        return discretize_method2(minmax_normalize(m))
    if method == 3:
        return discretize_method3(column_mean_normalize(m), bins, scope)  # type: ignore[arg-type]
    if method == 4:
        return discretize_method4(row_unit_normalize(m))
    raise DataError(f"unknown discretisation method {method!r}; expected 1, 2, 3 or 4")


def pattern_string(dm: DiscretizedMatrix, gene: str) -> str:
    try:
        row = dm.gene_ids.index(gene)
    except ValueError:
        raise KeyError(f"unknown gene {gene!r}") from None
    return ",".join(str(int(c)) for c in dm.codes[row])


def format_codes(dm: DiscretizedMatrix, delimiter: str = ",") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(["gene_id", *dm.condition_ids])
    for gene, row in zip(dm.gene_ids, dm.codes):
        writer.writerow([gene, *(int(c) for c in row)])
    return buf.getvalue()


def format_patterns(dm: DiscretizedMatrix) -> str:
    buf = io.StringIO()
    for gene, row in zip(dm.gene_ids, dm.codes):
        buf.write(f"{gene}\t{','.join(str(int(c)) for c in row)}\n")
    return buf.getvalue()


def write_codes(dm: DiscretizedMatrix, path: str | os.PathLike) -> Path:
    return atomic_write_text(path, format_codes(dm))


def write_patterns(dm: DiscretizedMatrix, path: str | os.PathLike) -> Path:
    return atomic_write_text(path, format_patterns(dm))
