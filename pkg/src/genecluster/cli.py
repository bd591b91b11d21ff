"""Command-line front end: ``genecluster <subcommand> ...``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 runtime failure.
Results go to standard output, diagnostics to standard error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write_text, dumps_json
from .cluster import DEFAULT_MAX_ITERS, DEFAULT_TOL, ccia_init, kmeans, random_init
from .errors import ConfigError, DataError, GeneClusterError
from .evaluation import silhouette
from .harness import (
    ExperimentConfig,
    load_config,
    render_table,
    run_experiment,
    trend_summary,
    write_outputs,
)
from .matrix import ExpressionMatrix, drop_incomplete_genes, load_matrix, synthesize_blobs, write_matrix
from .preprocess import DEFAULT_BINS, discretize, write_codes, write_patterns

log = logging.getLogger("genecluster")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2, which is our data-error code
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_complete(path: str, delimiter: str | None) -> ExpressionMatrix:
    if not Path(path).is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    m, summary = drop_incomplete_genes(load_matrix(path, delimiter))
    if summary.n_genes_kept < summary.n_genes_raw:
        log.warning(
            "dropped %d of %d genes with missing values",
            summary.n_genes_raw - summary.n_genes_kept, summary.n_genes_raw,
        )
    return m


def _points(m: ExpressionMatrix, method: int | None, bins: int, scope: str) -> np.ndarray:
    if method is None:
        return np.array(m.values)
    return discretize(m, method, bins, scope).as_points()


def cmd_preprocess(args) -> int:
    m = _load_complete(args.input, args.delimiter)
    dm = discretize(m, args.method, args.bins, args.scope)
    out = Path(args.output_dir)
    write_codes(dm, out / "discretized.csv")
    write_patterns(dm, out / "patterns.tsv")
    atomic_write_text(out / "discretized.meta.json", dumps_json(dm.metadata()))
    print(out / "discretized.csv")
    return EXIT_OK


def cmd_cluster(args) -> int:
    m = _load_complete(args.input, args.delimiter)
    if args.k > m.n_genes:
        raise DataError(f"k={args.k} exceeds the number of complete genes ({m.n_genes})")
    x = _points(m, args.method, args.bins, args.scope)
    out = Path(args.output_dir)

    if args.init == "ccia":
        if args.runs > 1:
            log.info("CCIA seeding is deterministic; running once instead of %d times", args.runs)
        result = kmeans(x, ccia_init(x, args.k), args.max_iters, args.tol)
        result.write(out / "clustering.json", out / "assignments.csv", m.gene_ids)
    else:
        runs = []
        for r in range(args.runs):
            seed = args.seed + r
            res = kmeans(x, random_init(x, args.k, seed), args.max_iters, args.tol)
            if args.runs > 1:
                res.write(out / "runs" / f"run_{seed}.json", out / "runs" / f"run_{seed}.csv", m.gene_ids)
            runs.append(res)
        best = min(range(len(runs)), key=lambda i: (runs[i].sse, i))
        result = runs[best]
        result.write(out / "clustering.json", out / "assignments.csv", m.gene_ids)
        if args.runs > 1:
            atomic_write_text(out / "runs.json", dumps_json({
                "best_by_sse": {"run": best, "seed": args.seed + best,
                                "json": f"runs/run_{args.seed + best}.json"},
                "runs": [{"seed": args.seed + i, "sse": r.sse, "iterations": r.iterations,
                          "converged": r.converged} for i, r in enumerate(runs)],
            }))
    print(f"sse={result.sse:.4f} iterations={result.iterations} converged={result.converged}")
    return EXIT_OK


def _read_assignments(path: str) -> dict[str, int]:
    if not Path(path).is_file():
        raise FileNotFoundError(f"assignments file not found: {path}")
    out: dict[str, int] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise DataError(f"{path}: expected a 'gene_id,cluster_index' header")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields")
            gene = row[0].strip()
            try:
                label = int(row[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: cluster index {row[1]!r} is not an integer") from None
            if label < 0:
                raise DataError(f"{path}:{lineno}: negative cluster index {label}")
            if gene in out:
                raise DataError(f"{path}:{lineno}: duplicate gene id {gene!r}")
            out[gene] = label
    return out


def cmd_silhouette(args) -> int:
    m = _load_complete(args.input, args.delimiter)
    assigned = _read_assignments(args.assignments)
    for gene in m.gene_ids:
        if gene not in assigned:
            raise DataError(f"gene {gene!r} in the matrix has no assignment")
    if len(assigned) != m.n_genes:
        extra = next(g for g in assigned if g not in set(m.gene_ids))
        raise DataError(f"gene {extra!r} in the assignments is not in the matrix")
    labels = np.array([assigned[g] for g in m.gene_ids], dtype=np.intp)
    x = _points(m, args.method, args.bins, args.scope)
    k = int(labels.max()) + 1
    report = silhouette(x, labels, max(k, 2))
    if args.output_dir:
        out = Path(args.output_dir)
        report.write(out / "silhouette.json", out / "silhouette.csv", m.gene_ids, labels)
    print(f"{report.overall_mean:.4f}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.config is None:
        cfg = ExperimentConfig()
    else:
        if not Path(args.config).is_file():
            raise ConfigError(f"config file not found: {args.config}")
        cfg = load_config(args.config)
    result = run_experiment(cfg)
    write_outputs(result, args.output_dir)
    print(render_table(result, args.format), end="")
    if args.format != "json":
        for ds, t in trend_summary(result).items():
            print(f"trend {ds}: CCIA >= K-Means best-of-{cfg.n_runs} in "
                  f"{t['ccia_at_least_random']}/{t['compared']} variants")
    failed = result.failed_cells()
    for c in failed:
        log.error("cell %s/%s/%s failed: %s", c.dataset, c.preprocessing, c.strategy, c.error)
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_synth(args) -> int:
    m, labels = synthesize_blobs(args.n_genes, args.n_conditions, args.k_true, args.spread, args.seed)
    out = Path(args.output_dir)
    write_matrix(m, out / "matrix.csv")
    atomic_write_text(
        out / "labels.csv",
        "gene_id,cluster_index\n" + "".join(f"{g},{int(c)}\n" for g, c in zip(m.gene_ids, labels)),
    )
    print(out / "matrix.csv")
    return EXIT_OK


def _add_input(p: argparse.ArgumentParser, preprocessing: bool = True) -> None:
    p.add_argument("--input", required=True, help="genes x conditions CSV/TSV")
    p.add_argument("--delimiter", default=None, help="field separator (default: by extension)")
    if preprocessing:
        p.add_argument("--method", type=int, choices=(1, 2, 3, 4), default=None,
                       help="discretise with method 1-4 before clustering")
        p.add_argument("--bins", type=int, default=DEFAULT_BINS, help="method 3 bin count")
        p.add_argument("--scope", choices=("global", "column"), default="global",
                       help="method 3 binning range")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="genecluster", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", help="normalise and discretise a matrix")
    _add_input(p, preprocessing=False)
    p.add_argument("--method", type=int, choices=(1, 2, 3, 4), required=True)
    p.add_argument("--bins", type=int, default=DEFAULT_BINS, help="method 3 bin count")
    p.add_argument("--scope", choices=("global", "column"), default="global")
    p.add_argument("--output-dir", default=".")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("cluster", help="run K-Means")
    _add_input(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--init", choices=("random", "ccia"), default="ccia")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--output-dir", default=".")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("silhouette", help="score a clustering")
    _add_input(p)
    p.add_argument("--assignments", required=True, help="CSV with gene_id,cluster_index")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_silhouette)

    p = sub.add_parser("experiment", help="run the random-vs-CCIA comparison")
    p.add_argument("--config", default=None, help="YAML experiment config")
    p.add_argument("--output-dir", default="results")
    p.add_argument("--format", choices=("markdown", "csv", "json"), default="markdown")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("synth", help="write a synthetic blob matrix")
    p.add_argument("--n-genes", type=int, default=300)
    p.add_argument("--n-conditions", type=int, default=17)
    p.add_argument("--k-true", type=int, default=12)
    p.add_argument("--spread", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", default=".")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "runs", 1) < 1 or getattr(args, "k", 1) < 1:
        parser.error("--runs and --k must be positive")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"genecluster: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, KeyError) as exc:
        print(f"genecluster: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GeneClusterError as exc:
        print(f"genecluster: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("unhandled failure", exc_info=True)
        print(f"genecluster: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
