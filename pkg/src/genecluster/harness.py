"""Comparison harness: K-Means from random seeds vs K-Means from CCIA seeds,
over several preprocessing variants and datasets.

For each dataset, each preprocessing variant and each seeding strategy the
harness fills one *cell*. Random seeding runs ``n_runs`` times with seeds
``base_seed .. base_seed + n_runs - 1``; CCIA is deterministic, so it runs
once and its single score fills every aggregate. The headline number of a
cell is the best silhouette over its runs.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from ._io import atomic_write_bytes, atomic_write_text
from .cluster import (
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    canonical_labels,
    ccia_init,
    kmeans,
    random_init,
)
from .errors import ConfigError, DataError, GeneClusterError
from .evaluation import silhouette
from .matrix import ExpressionMatrix, drop_incomplete_genes, load_matrix, synthesize_blobs
from .preprocess import DEFAULT_BINS, discretize

VARIANTS = ("none", "method1", "method2", "method3", "method4")
VARIANT_LABELS = {
    "none": "Raw",
    "method1": "Method I",
    "method2": "Method II",
    "method3": "Method III",
    "method4": "Method IV",
}
STRATEGIES = ("random", "ccia")
STRATEGY_LABELS = {"random": "K-Means", "ccia": "CCIA + K-Means"}
THREADS_ENV = "GENECLUSTER_THREADS"
TREND_SLACK = 1e-12


# --- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSpec:
    """Either a CSV file (``path`` set) or a synthetic blob recipe."""

    name: str
    path: str | None = None
    delimiter: str | None = None
    missing_tokens: tuple[str, ...] = ("", "NA")
    n_genes: int = 300
    n_conditions: int = 17
    k_true: int = 12
    spread: float = 0.5
    seed: int = 0
    note: str | None = None

    @property
    def synthetic(self) -> bool:
        return self.path is None

    def load(self) -> tuple[ExpressionMatrix, np.ndarray | None]:
        if self.path is not None:
            return load_matrix(self.path, self.delimiter, self.missing_tokens), None
        return synthesize_blobs(self.n_genes, self.n_conditions, self.k_true, self.spread, self.seed)

    def describe(self) -> dict[str, Any]:
        if self.path is not None:
            d: dict[str, Any] = {"source": "csv", "path": self.path}
        else:
            d = {
                "source": "synthetic",
                "n_genes": self.n_genes,
                "n_conditions": self.n_conditions,
                "k_true": self.k_true,
                "spread": self.spread,
                "seed": self.seed,
            }
        if self.note:
            d["note"] = self.note
        return d


_WIDTH_NOTE = "condition count is a harness default; the source data set's width is not stated"

# synthetic stand-ins shaped like the four data sets of the original study
STANDIN_DATASETS = (
    DatasetSpec("serum", n_genes=517, n_conditions=17, seed=517, note=_WIDTH_NOTE),
    DatasetSpec("yeast", n_genes=2882, n_conditions=17, seed=2882),
    DatasetSpec("simulated", n_genes=300, n_conditions=17, seed=300, note=_WIDTH_NOTE),
    DatasetSpec("leukemia", n_genes=7129, n_conditions=34, seed=7129),
)


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple[DatasetSpec, ...] = STANDIN_DATASETS
    preprocessing: tuple[str, ...] = VARIANTS
    method3_bins: int = DEFAULT_BINS
    method3_scope: str = "global"
    k_clusters: int = 12
    n_runs: int = 10
    base_seed: int = 0
    max_iters: int = DEFAULT_MAX_ITERS
    tol: float = DEFAULT_TOL
    threads: int | None = None

    def __post_init__(self) -> None:
        if self.n_runs < 1:
            raise ConfigError(f"n_runs must be >= 1, got {self.n_runs}")
        if self.k_clusters < 2:
            raise ConfigError(f"k_clusters must be >= 2, got {self.k_clusters}")
        if self.method3_bins < 1:
            raise ConfigError(f"method3.bins must be >= 1, got {self.method3_bins}")
        if self.method3_scope not in ("global", "column"):
            raise ConfigError(f"method3.scope must be 'global' or 'column', got {self.method3_scope!r}")
        unknown = [p for p in self.preprocessing if p not in VARIANTS]
        if unknown:
            raise ConfigError(f"unknown preprocessing variant(s) {unknown}; choose from {list(VARIANTS)}")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError(f"dataset names must be unique, got {names}")


_TOP_KEYS = {
    "datasets", "preprocessing", "method3", "k_clusters", "n_runs",
    "base_seed", "kmeans", "threads",
}
_SYNTH_KEYS = {"n_genes", "n_conditions", "k_true", "spread", "seed"}
_CSV_KEYS = {"path", "delimiter", "missing_tokens"}


def _expect(value: Any, kind: type | tuple[type, ...], where: str) -> Any:
    if isinstance(value, bool) and kind in (int, float, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if not isinstance(value, kind):
        name = kind.__name__ if isinstance(kind, type) else " or ".join(k.__name__ for k in kind)
        raise ConfigError(f"{where}: expected {name}, got {value!r}")
    return value


def _check_keys(section: Mapping, allowed: set[str], where: str) -> None:
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {extra}; allowed: {sorted(allowed)}")


def _parse_dataset(entry: Any, i: int, base_dir: Path) -> DatasetSpec:
    where = f"datasets[{i}]"
    _expect(entry, dict, where)
    _check_keys(entry, {"name", "synthetic", "csv", "note"}, where)
    name = str(entry.get("name", f"dataset{i + 1}"))
    if ("synthetic" in entry) == ("csv" in entry):
        raise ConfigError(f"{where}: give exactly one of 'synthetic' or 'csv'")
    if "csv" in entry:
        sec = _expect(entry["csv"], dict, f"{where}.csv")
        _check_keys(sec, _CSV_KEYS, f"{where}.csv")
        if "path" not in sec:
            raise ConfigError(f"{where}.csv: missing required field 'path'")
        path = Path(str(sec["path"]))
        if not path.is_absolute():
            path = base_dir / path
        tokens = sec.get("missing_tokens", ["", "NA"])
        _expect(tokens, list, f"{where}.csv.missing_tokens")
        return DatasetSpec(
            name=name,
            path=str(path),
            delimiter=sec.get("delimiter"),
            missing_tokens=tuple(str("" if t is None else t) for t in tokens),
            note=entry.get("note"),
        )
    sec = entry["synthetic"] or {}
    _expect(sec, dict, f"{where}.synthetic")
    _check_keys(sec, _SYNTH_KEYS, f"{where}.synthetic")
    kwargs: dict[str, Any] = {}
    for key in ("n_genes", "n_conditions", "k_true", "seed"):
        if key in sec:
            kwargs[key] = _expect(sec[key], int, f"{where}.synthetic.{key}")
    if "spread" in sec:
        kwargs["spread"] = float(_expect(sec["spread"], (int, float), f"{where}.synthetic.spread"))
    return DatasetSpec(name=name, note=entry.get("note"), **kwargs)


def parse_config(doc: Any, base_dir: str | os.PathLike = ".") -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a parsed YAML mapping.

    Every field is optional; see ``configs/example.yaml`` in the repository
    for the full schema.
    """
    if doc is None:
        doc = {}
    _expect(doc, dict, "config")
    _check_keys(doc, _TOP_KEYS, "config")
    kwargs: dict[str, Any] = {}
    for key in ("k_clusters", "n_runs", "base_seed"):
        if key in doc:
            kwargs[key] = _expect(doc[key], int, key)
    if "threads" in doc:
        kwargs["threads"] = _expect(doc["threads"], int, "threads")
    if "preprocessing" in doc:
        pre = _expect(doc["preprocessing"], list, "preprocessing")
        kwargs["preprocessing"] = tuple(str(p) for p in pre)
    if "method3" in doc:
        sec = _expect(doc["method3"], dict, "method3")
        _check_keys(sec, {"bins", "scope"}, "method3")
        if "bins" in sec:
            kwargs["method3_bins"] = _expect(sec["bins"], int, "method3.bins")
        if "scope" in sec:
            kwargs["method3_scope"] = str(sec["scope"])
    if "kmeans" in doc:
        sec = _expect(doc["kmeans"], dict, "kmeans")
        _check_keys(sec, {"max_iters", "tol"}, "kmeans")
        if "max_iters" in sec:
            kwargs["max_iters"] = _expect(sec["max_iters"], int, "kmeans.max_iters")
        if "tol" in sec:
            kwargs["tol"] = float(_expect(sec["tol"], (int, float), "kmeans.tol"))
    if "datasets" in doc:
        entries = _expect(doc["datasets"], list, "datasets")
        kwargs["datasets"] = tuple(
            _parse_dataset(e, i, Path(base_dir)) for i, e in enumerate(entries)
        )
    return ExperimentConfig(**kwargs)


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"{path}: YAML syntax error at {where}: {exc}") from None
    return parse_config(doc, path.parent)


# --- results ------------------------------------------------------------------


@dataclass(frozen=True)
class CellResult:
    dataset: str
    preprocessing: str
    strategy: str
    silhouettes: tuple[float, ...] = ()
    sses: tuple[float, ...] = ()
    iterations: tuple[int, ...] = ()
    ari: float | None = None
    error: str | None = None
    wall_time: float = field(default=0.0, compare=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def best_silhouette(self) -> float | None:
        return max(self.silhouettes) if self.ok else None

    @property
    def mean_silhouette(self) -> float | None:
        return float(np.mean(self.silhouettes)) if self.ok else None

    @property
    def std_silhouette(self) -> float | None:
        return float(np.std(self.silhouettes)) if self.ok else None

    @property
    def mean_iterations(self) -> float | None:
        return float(np.mean(self.iterations)) if self.ok else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "preprocessing": self.preprocessing,
            "strategy": self.strategy,
            "best_silhouette": self.best_silhouette,
            "mean_silhouette": self.mean_silhouette,
            "std_silhouette": self.std_silhouette,
            "mean_iterations": self.mean_iterations,
            "silhouettes": list(self.silhouettes),
            "sses": list(self.sses),
            "iterations": list(self.iterations),
            "ari": self.ari,
            "error": self.error,
            "wall_time": self.wall_time,
        }


@dataclass(frozen=True)
class ExperimentResult:
    cells: tuple[CellResult, ...] = ()
    datasets: tuple[str, ...] = ()
    preprocessing: tuple[str, ...] = ()
    metadata: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def cell(self, dataset: str, preprocessing: str, strategy: str) -> CellResult:
        c = self.find(dataset, preprocessing, strategy)
        if c is None:
            raise KeyError((dataset, preprocessing, strategy))
        return c

    def find(self, dataset: str, preprocessing: str, strategy: str) -> CellResult | None:
        for c in self.cells:
            if (c.dataset, c.preprocessing, c.strategy) == (dataset, preprocessing, strategy):
                return c
        return None

    @property
    def strategies(self) -> tuple[str, ...]:
        present = {c.strategy for c in self.cells}
        return tuple(s for s in STRATEGIES if s in present)

    def failed_cells(self) -> list[CellResult]:
        return [c for c in self.cells if not c.ok]

    def to_dict(self) -> dict[str, Any]:
        return {
            "datasets": list(self.datasets),
            "preprocessing": list(self.preprocessing),
            "metadata": dict(self.metadata),
            "cells": [c.to_dict() for c in self.cells],
        }


def trend_summary(r: ExperimentResult) -> dict[str, dict[str, Any]]:
    """Per dataset: in how many variants CCIA's silhouette >= random best-of-runs."""
    out: dict[str, dict[str, Any]] = {}
    for ds in r.datasets:
        wins, total = 0, 0
        for pre in r.preprocessing:
            rnd, cc = r.find(ds, pre, "random"), r.find(ds, pre, "ccia")
            if rnd is None or cc is None or not (rnd.ok and cc.ok):
                continue
            total += 1
            wins += cc.best_silhouette >= rnd.best_silhouette - TREND_SLACK
        out[ds] = {"ccia_at_least_random": wins, "compared": total}
    return out


# --- running ------------------------------------------------------------------


def thread_count(cfg_threads: int | None = None) -> int:
    value = cfg_threads
    if value is None:
        raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 0:
        raise ConfigError(f"thread count must be >= 0, got {value}")
    return value or (os.cpu_count() or 1)


def _points_for(m: ExpressionMatrix, variant: str, cfg: ExperimentConfig) -> np.ndarray:
    if variant == "none":
        return np.array(m.values)
    method = int(variant[-1])
    return discretize(m, method, cfg.method3_bins, cfg.method3_scope).as_points()


def _ari(truth: np.ndarray | None, labels: np.ndarray) -> float | None:
    if truth is None:
        return None
    from sklearn.metrics import adjusted_rand_score

    return float(adjusted_rand_score(truth, labels))


def _run_cell(
    ds: str, variant: str, strategy: str, points: np.ndarray,
    truth: np.ndarray | None, cfg: ExperimentConfig,
) -> CellResult:
    t0 = time.perf_counter()
    k = cfg.k_clusters
    sil: list[float] = []
    sses: list[float] = []
    iters: list[int] = []
    best_labels = None
    try:
        if strategy == "ccia":
            inits = [ccia_init(points, k)]
        else:
            inits = [random_init(points, k, cfg.base_seed + r) for r in range(cfg.n_runs)]
        for init in inits:
            res = kmeans(points, init, cfg.max_iters, cfg.tol)
            labels = canonical_labels(res.assignments)
            s = silhouette(points, labels, k).overall_mean
            if best_labels is None or s > max(sil):
                best_labels = labels
            sil.append(s)
            sses.append(res.sse)
            iters.append(res.iterations)
    except GeneClusterError as exc:
        return CellResult(ds, variant, strategy, error=str(exc),
                          wall_time=time.perf_counter() - t0)
    return CellResult(
        ds, variant, strategy,
        silhouettes=tuple(sil), sses=tuple(sses), iterations=tuple(iters),
        ari=_ari(truth, best_labels),
        wall_time=time.perf_counter() - t0,
    )


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Fill every (dataset, preprocessing, strategy) cell described by ``cfg``.

    Per-cell failures (a preprocessing step hitting a degenerate gene, a
    clustering that collapses to one cluster...) are recorded in the cell's
    ``error`` field. A data set that cannot be loaded, or has fewer complete
    genes than ``k_clusters``, raises :class:`DataError`.

    The result depends only on ``cfg``: cells run concurrently but are
    collected in a fixed order.
    """
    jobs = []
    meta: dict[str, Any] = {
        "k_clusters": cfg.k_clusters,
        "n_runs": cfg.n_runs,
        "base_seed": cfg.base_seed,
        "method3": {"bins": cfg.method3_bins, "scope": cfg.method3_scope},
        "kmeans": {"max_iters": cfg.max_iters, "tol": cfg.tol},
        "headline": "best silhouette over runs (random); single deterministic run (ccia)",
        "ari_note": "adjusted Rand index vs generator labels, synthetic data only; not part of the comparison protocol",
        "datasets": {},
    }
    for spec in cfg.datasets:
        raw, truth = spec.load()
        m, summary = drop_incomplete_genes(raw)
        if m.n_genes < cfg.k_clusters:
            raise DataError(
                f"dataset {spec.name!r}: {m.n_genes} complete genes, fewer than k={cfg.k_clusters}"
            )
        meta["datasets"][spec.name] = {
            **spec.describe(),
            "n_genes_raw": summary.n_genes_raw,
            "n_genes_kept": summary.n_genes_kept,
            "n_conditions": summary.n_conditions,
        }
        for variant in cfg.preprocessing:
            try:
                points = _points_for(m, variant, cfg)
            except GeneClusterError as exc:
                points, err = None, f"preprocessing failed: {exc}"
            for strategy in STRATEGIES:
                if points is None:
                    jobs.append(CellResult(spec.name, variant, strategy, error=err))
                else:
                    jobs.append((spec.name, variant, strategy, points, truth))

    workers = thread_count(cfg.threads)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            job if isinstance(job, CellResult) else pool.submit(_run_cell, *job, cfg)
            for job in jobs
        ]
        cells = [f if isinstance(f, CellResult) else f.result() for f in futures]

    return ExperimentResult(
        cells=tuple(cells),
        datasets=tuple(d.name for d in cfg.datasets),
        preprocessing=tuple(cfg.preprocessing),
        metadata=meta,
    )


# --- rendering ----------------------------------------------------------------


def _fmt(c: CellResult | None, stat: str) -> str:
    if c is None:
        return ""
    v = getattr(c, f"{stat}_silhouette")
    return "ERROR" if v is None else f"{v:.4f}"


def _rows(r: ExperimentResult, stat: str):
    for ds in r.datasets:
        for strategy in r.strategies:
            cells = [_fmt(r.find(ds, pre, strategy), stat) for pre in r.preprocessing]
            yield [ds, STRATEGY_LABELS[strategy], *cells]


def render_table(r: ExperimentResult, format: str = "markdown", stat: str = "best") -> str:
    """Render one row per (dataset, strategy) and one column per preprocessing
    variant, silhouettes to four decimals. ``format`` is ``csv``, ``json``
    or ``markdown``; JSON carries every field at full precision."""
    if stat not in ("best", "mean", "std"):
        raise ValueError(f"unknown statistic {stat!r}")
    if format == "json":
        return json.dumps(r.to_dict(), indent=2) + "\n"
    header = ["Dataset", "Method", *(VARIANT_LABELS[p] for p in r.preprocessing)]
    rows = list(_rows(r, stat))
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()
    if format == "markdown":
        lines = [
            "| " + " | ".join(header) + " |",
            "|" + "|".join(["---"] * 2 + ["---:"] * len(r.preprocessing)) + "|",
        ]
        lines += ["| " + " | ".join(row) + " |" for row in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {format!r}")


def result_from_json(text: str) -> ExperimentResult:
    doc = json.loads(text)
    cells = tuple(
        CellResult(
            c["dataset"], c["preprocessing"], c["strategy"],
            silhouettes=tuple(c["silhouettes"]), sses=tuple(c["sses"]),
            iterations=tuple(c["iterations"]), ari=c["ari"], error=c["error"],
            wall_time=c["wall_time"],
        )
        for c in doc["cells"]
    )
    return ExperimentResult(cells, tuple(doc["datasets"]), tuple(doc["preprocessing"]),
                            doc.get("metadata", {}))


def chart_figure(r: ExperimentResult):
    """Grouped bar chart: one panel per strategy, one group per dataset, one
    bar per preprocessing variant. Failed or absent cells leave a gap."""
    if not r.cells:
        raise DataError("nothing to plot: experiment result is empty")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    strategies = r.strategies
    fig, axes = plt.subplots(1, len(strategies), figsize=(6 * len(strategies), 4.2),
                             sharey=True, squeeze=False)
    width = 0.8 / max(len(r.preprocessing), 1)
    group_x = np.arange(len(r.datasets))
    colors = plt.get_cmap("tab10").colors
    for ax, strategy in zip(axes[0], strategies):
        for v, pre in enumerate(r.preprocessing):
            heights = []
            for ds in r.datasets:
                c = r.find(ds, pre, strategy)
                val = None if c is None else c.best_silhouette
                heights.append(np.nan if val is None else val)
            xs = group_x - 0.4 + width * (v + 0.5)
            ax.bar(xs, heights, width, label=VARIANT_LABELS[pre], color=colors[v % 10])
        ax.set_xticks(group_x)
        ax.set_xticklabels(r.datasets)
        ax.set_title(STRATEGY_LABELS[strategy])
        ax.axhline(0.0, color="black", linewidth=0.6)
        ax.set_ylabel("silhouette")
    axes[0][0].legend(fontsize=8, loc="best")
    fig.tight_layout()
    return fig


def render_chart(r: ExperimentResult, out: str | os.PathLike) -> Path:
    """Write :func:`chart_figure` as SVG. Output bytes depend only on ``r``."""
    import matplotlib
    import matplotlib.pyplot as plt

    fig = chart_figure(r)
    buf = io.BytesIO()
    # fixed hash salt and no timestamp keep the SVG byte-stable
    with matplotlib.rc_context({"svg.hashsalt": "genecluster", "svg.fonttype": "path"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return atomic_write_bytes(out, buf.getvalue())


def write_outputs(r: ExperimentResult, out_dir: str | os.PathLike) -> list[Path]:
    """Write tables in all three formats plus the chart into ``out_dir``."""
    out_dir = Path(out_dir)
    written = [
        atomic_write_text(out_dir / "table.md", render_table(r, "markdown")),
        atomic_write_text(out_dir / "table.csv", render_table(r, "csv")),
        atomic_write_text(out_dir / "table_mean.md", render_table(r, "markdown", "mean")),
        atomic_write_text(out_dir / "results.json", render_table(r, "json")),
    ]
    if r.cells:
        written.append(render_chart(r, out_dir / "chart.svg"))
    return written
