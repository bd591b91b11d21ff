"""Acceptance gate. Each test prints one [PASS]/[FAIL] line, collected again
in the "acceptance criteria" section at the end of the pytest run."""

import itertools
import time

import numpy as np
import pytest

from genecluster.cli import main
from genecluster.cluster import CentroidSet, ccia_init, kmeans, random_init
from genecluster.errors import DataError
from genecluster.evaluation import silhouette, silhouette_bruteforce
from genecluster.harness import DatasetSpec, ExperimentConfig, run_experiment
from genecluster.matrix import (
    ExpressionMatrix,
    drop_incomplete_genes,
    load_matrix,
    synthesize_blobs,
    write_matrix,
)
from genecluster.preprocess import (
    column_mean_normalize,
    discretize,
    minmax_normalize,
    row_unit_normalize,
    zscore_normalize,
)

from oracles import canonical, is_lloyd_fixed_point, partition_sse, set_partitions


def test_silhouette_oracle_equivalence(acceptance):
    rng = np.random.default_rng(20240101)
    worst, fast_time, total_time = 0.0, 0.0, time.perf_counter()
    for _ in range(100):
        n = int(rng.integers(2, 201))
        k = int(rng.integers(2, min(12, n) + 1))
        x = rng.normal(size=(n, int(rng.integers(1, 18))))
        if rng.random() < 0.3:
            x = np.round(x)
        labels = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
        rng.shuffle(labels)
        t0 = time.perf_counter()
        fast = silhouette(x, labels, k)
        fast_time += time.perf_counter() - t0
        slow = silhouette_bruteforce(x, labels, k)
        worst = max(worst, float(np.max(np.abs(fast.per_point - slow.per_point))))
    total_time = time.perf_counter() - total_time
    acceptance.check(
        "silhouette matches brute-force oracle (100 instances, n<=200, k 2..12, tol 1e-12, <10 s)",
        worst <= 1e-12 and total_time < 10.0,
        f"max |diff| = {worst:.2e}, optimised {fast_time:.2f} s, total incl. oracle {total_time:.2f} s",
    )


def _small_datasets(n, dim, rng):
    yield rng.normal(size=(n, dim))
    yield rng.uniform(-5, 5, size=(n, dim))
    yield rng.integers(0, 3, size=(n, dim)).astype(float)  # duplicates and exact ties


def test_kmeans_exhaustive_oracle(acceptance):
    rng = np.random.default_rng(7)
    checked, failures = 0, []
    for n in range(1, 9):
        for k in range(1, min(3, n) + 1):
            for dim in (1, 2):
                for x in _small_datasets(n, dim, rng):
                    table = {canonical(l): partition_sse(x, l) for l in set_partitions(n, k)}
                    distinct = np.unique(x, axis=0)
                    # every init drawn from the data, plus seeded random ones
                    inits = [CentroidSet(x[list(c)], "random", None)
                             for c in itertools.combinations(range(n), k)]
                    if len(distinct) >= k:
                        inits += [random_init(x, k, s) for s in range(3)]
                    for init in inits:
                        res = kmeans(x, init)
                        labels = res.assignments.tolist()
                        ok = is_lloyd_fixed_point(x, labels) and abs(
                            table[canonical(labels)] - res.sse) <= 1e-9
                        checked += 1
                        if not ok:
                            failures.append((n, k, labels, res.sse))
    acceptance.check(
        "K-Means output is a fixed point with oracle SSE on all n<=8, K<=3 (tol 1e-9)",
        not failures,
        f"{checked} runs checked, {len(failures)} failures",
    )


def test_lloyd_monotonicity(acceptance):
    rng = np.random.default_rng(99)
    violations, worst = 0, 0.0
    for run in range(1000):
        n = int(rng.integers(5, 200))
        k = int(rng.integers(1, min(15, n) + 1))
        x = rng.normal(size=(n, int(rng.integers(1, 12))))
        if run % 2:
            init = random_init(x, k, run)
        else:
            try:
                init = ccia_init(x, k)
            except DataError:
                init = random_init(x, k, run)
        hist = np.diff(kmeans(x, init, tol=0.0).sse_history)
        worst = max(worst, float(hist.max(initial=0.0)))
        violations += int(np.any(hist > 1e-9))
    acceptance.check(
        "Lloyd SSE non-increasing over 1000 randomized runs (slack 1e-9)",
        violations == 0,
        f"{violations} violations, largest increase {worst:.2e}",
    )


def test_ccia_cli_determinism(acceptance, tmp_path):
    m, _ = synthesize_blobs(300, 17, 12, 0.5, 11)
    write_matrix(m, tmp_path / "m.csv")
    outputs = set()
    for i in range(10):
        out = tmp_path / f"run{i}"
        code = main(["cluster", "--input", str(tmp_path / "m.csv"), "--k", "12",
                     "--init", "ccia", "--output-dir", str(out)])
        assert code == 0
        outputs.add((out / "assignments.csv").read_bytes())
    acceptance.check(
        "10 CLI 'cluster --init ccia' invocations give byte-identical assignment CSVs",
        len(outputs) == 1,
        f"{len(outputs)} distinct output(s)",
    )


def test_ccia_hand_trace(acceptance):
    init = ccia_init(np.array([[0.0], [1.0], [10.0], [11.0]]), 2)
    got = sorted(init.centroids.ravel().tolist())
    acceptance.check(
        "CCIA on [0, 1, 10, 11], k=2 gives centroids {0.5, 10.5} exactly",
        got == [0.5, 10.5],
        f"centroids {got}",
    )


@pytest.mark.slow
def test_trend_reproduction(acceptance):
    specs = tuple(
        DatasetSpec(f"seed{s}", n_genes=500, n_conditions=17, k_true=12, spread=0.5, seed=s)
        for s in range(20)
    )
    cfg = ExperimentConfig(datasets=specs, k_clusters=12, n_runs=10)
    t0 = time.perf_counter()
    r = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    wins = total = 0
    per_variant = {}
    for spec in specs:
        for pre in cfg.preprocessing:
            rnd, cc = r.cell(spec.name, pre, "random"), r.cell(spec.name, pre, "ccia")
            total += 1
            won = rnd.ok and cc.ok and cc.best_silhouette >= rnd.best_silhouette - 1e-12
            wins += won
            per_variant[pre] = per_variant.get(pre, 0) + won
    share = wins / total
    acceptance.check(
        "CCIA >= random best-of-10 silhouette in >=80% of 20 seeds x 5 variants (500x17, K=12, <2 min)",
        share >= 0.8 and elapsed < 120,
        f"{wins}/{total} = {share:.0%} cells, per variant {per_variant}, {elapsed:.1f} s",
    )


def test_preprocessing_postconditions(acceptance):
    rng = np.random.default_rng(5)
    worst = {"zscore_mean": 0.0, "zscore_std": 0.0, "minmax": 0.0, "colmean": 0.0, "rowunit": 0.0}
    alphabet_breaks = 0
    for _ in range(1000):
        shape = (int(rng.integers(2, 40)), int(rng.integers(2, 20)))
        x = rng.lognormal(mean=2.0, sigma=1.0, size=shape)  # positive intensities
        m = ExpressionMatrix.from_array(x)
        z = zscore_normalize(m).values
        worst["zscore_mean"] = max(worst["zscore_mean"], float(np.abs(z.mean(axis=1)).max()))
        worst["zscore_std"] = max(worst["zscore_std"], float(np.abs(z.std(axis=1) - 1).max()))
        mm = minmax_normalize(m).values
        worst["minmax"] = max(worst["minmax"], float(np.abs(mm.min(axis=1)).max()),
                              float(np.abs(mm.max(axis=1) - 1).max()))
        cm = column_mean_normalize(m).values
        worst["colmean"] = max(worst["colmean"], float(np.abs(cm.mean(axis=0) - 1).max()))
        ru = row_unit_normalize(m).values
        worst["rowunit"] = max(worst["rowunit"], float(np.abs(np.linalg.norm(ru, axis=1) - 1).max()))
        for method in (1, 2, 3, 4):
            dm = discretize(m, method)
            alphabet_breaks += int(not set(np.unique(dm.codes)) <= set(dm.alphabet))
    ok = (worst["zscore_mean"] < 1e-9 and worst["zscore_std"] < 1e-9 and worst["minmax"] <= 1e-12
          and worst["colmean"] <= 1e-12 and worst["rowunit"] <= 1e-12 and alphabet_breaks == 0)
    acceptance.check(
        "normaliser post-conditions and discretiser alphabets hold on 1000 random matrices",
        ok,
        ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", alphabet breaks {alphabet_breaks}",
    )


def test_missing_value_protocol(acceptance, tmp_path):
    rng = np.random.default_rng(2884)
    values = rng.normal(size=(2884, 17))
    values[17, 4] = np.nan
    values[2500, [0, 16]] = np.nan
    write_matrix(ExpressionMatrix.from_array(values), tmp_path / "yeast.csv")
    kept, summary = drop_incomplete_genes(load_matrix(tmp_path / "yeast.csv"))
    acceptance.check(
        "2884-gene file with 2 incomplete genes reduces to 2882 x 17",
        kept.shape == (2882, 17) and summary.n_genes_raw == 2884,
        f"shape {kept.shape}",
    )


@pytest.mark.slow
def test_scale(acceptance):
    m, _ = synthesize_blobs(7129, 34, 12, 0.5, 7129)
    t0 = time.perf_counter()
    x = discretize(m, 3).as_points()
    res = kmeans(x, ccia_init(x, 12))
    score = silhouette(x, res.assignments, 12).overall_mean
    elapsed = time.perf_counter() - t0
    acceptance.check(
        "Method III + CCIA + K-Means (K=12) + silhouette on 7129 x 34 in < 60 s",
        elapsed < 60,
        f"{elapsed:.1f} s, silhouette {score:.4f}",
    )
