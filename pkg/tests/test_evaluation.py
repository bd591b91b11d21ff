import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genecluster.errors import DataError
from genecluster.evaluation import silhouette, silhouette_bruteforce


def test_four_points_hand_values(four_points):
    # s(0): a = 1, b = (10 + 11) / 2 = 10.5, s = 9.5 / 10.5
    # s(1): a = 1, b = (9 + 10) / 2 = 9.5,  s = 8.5 / 9.5
    rep = silhouette(four_points, [0, 0, 1, 1], 2)
    expected = [9.5 / 10.5, 8.5 / 9.5, 8.5 / 9.5, 9.5 / 10.5]
    np.testing.assert_allclose(rep.per_point, expected, rtol=0, atol=1e-15)
    assert round(rep.per_point[0], 6) == 0.904762
    assert round(rep.overall_mean, 6) == 0.899749
    np.testing.assert_allclose(rep.per_cluster_mean, [0.899749, 0.899749], atol=1e-6)
    assert rep.n_singletons == 0


def test_singleton_is_zero():
    rep = silhouette([[0.0], [1.0], [50.0]], [0, 0, 1], 2)
    assert rep.per_point[2] == 0.0
    assert rep.n_singletons == 1


def test_duplicates_split_across_clusters_not_positive():
    x = [[1.0], [1.0], [1.0], [1.0]]
    rep = silhouette(x, [0, 0, 1, 1], 2)
    assert np.all(rep.per_point <= 0)


def test_identical_members_far_apart_score_one():
    x = [[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0]]
    rep = silhouette(x, [0, 0, 1, 1], 2)
    np.testing.assert_array_equal(rep.per_point, 1.0)


def test_empty_cluster_is_nan_in_summary():
    rep = silhouette([[0.0], [1.0], [10.0], [11.0]], [0, 0, 2, 2], 3)
    assert math.isnan(rep.per_cluster_mean[1])
    assert rep.to_dict()["per_cluster_mean"][1] is None
    json.loads(rep.to_json())


def test_csv_export():
    rep = silhouette([[0.0], [1.0], [10.0], [11.0]], [0, 0, 1, 1], 2)
    lines = rep.to_csv(["a", "b", "c", "d"], [0, 0, 1, 1]).splitlines()
    assert lines[0] == "gene_id,cluster,s_value"
    assert lines[1].startswith("a,0,0.9047")


@pytest.mark.parametrize(
    "x, labels, k",
    [
        ([[0.0], [1.0]], [0, 0], 2),  # one non-empty cluster
        ([[0.0]], [0], 2),  # too few points
        ([[0.0], [1.0]], [0, 1], 1),  # k < 2
        ([[0.0], [1.0]], [0, 2], 2),  # label out of range
        ([[0.0], [1.0]], [0, 1, 1], 2),  # length mismatch
        ([[0.0], [1.0]], [0.0, 1.0], 2),  # non-integer labels
    ],
)
def test_errors(x, labels, k):
    with pytest.raises(DataError):
        silhouette(x, labels, k)


@st.composite
def _labelled(draw):
    n = draw(st.integers(2, 30))
    k = draw(st.integers(2, min(n, 6)))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    labels = np.concatenate([[0, 1], rng.integers(0, k, n - 2)])
    x = rng.normal(size=(n, draw(st.integers(1, 4))))
    if draw(st.booleans()):
        x = np.round(x)  # duplicated points and exact ties
    return x, labels, k


@given(_labelled())
@settings(max_examples=150, deadline=None)
def test_matches_bruteforce(inst):
    x, labels, k = inst
    fast, slow = silhouette(x, labels, k), silhouette_bruteforce(x, labels, k)
    np.testing.assert_allclose(fast.per_point, slow.per_point, rtol=0, atol=1e-12)
    np.testing.assert_allclose(fast.per_cluster_mean, slow.per_cluster_mean, rtol=0, atol=1e-12)
    assert abs(fast.overall_mean - slow.overall_mean) <= 1e-12
    assert fast.n_singletons == slow.n_singletons
    assert np.all((fast.per_point >= -1) & (fast.per_point <= 1))


@given(_labelled(), st.floats(-100, 100), st.floats(0.01, 100), st.floats(0, 2 * math.pi))
@settings(max_examples=80, deadline=None)
def test_similarity_invariance(inst, shift, scale, angle):
    x, labels, k = inst
    base = silhouette(x, labels, k).per_point
    np.testing.assert_allclose(silhouette(x + shift, labels, k).per_point, base, atol=1e-9)
    np.testing.assert_allclose(silhouette(x * scale, labels, k).per_point, base, atol=1e-9)
    if x.shape[1] >= 2:
        r = np.eye(x.shape[1])
        c, s = math.cos(angle), math.sin(angle)
        r[:2, :2] = [[c, -s], [s, c]]
        np.testing.assert_allclose(silhouette(x @ r.T, labels, k).per_point, base, atol=1e-9)


def test_well_separated_blobs_score_high():
    rng = np.random.default_rng(0)
    radius, k = 1.0, 4
    centres = np.arange(k)[:, None] * 10 * 2 * radius * np.ones((1, 3))
    labels = np.repeat(np.arange(k), 25)
    x = centres[labels] + rng.uniform(-radius / 2, radius / 2, size=(100, 3))
    assert silhouette(x, labels, k).overall_mean >= 0.8


def test_chunking_matches_single_block():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(1300, 3))
    labels = rng.integers(0, 5, 1300)
    rep = silhouette(x, labels, 5)
    # point 700 sits in the second row block
    d = np.linalg.norm(x[700] - x, axis=1)
    own = labels[700]
    a = d[labels == own].sum() / ((labels == own).sum() - 1)
    b = min(d[labels == c].mean() for c in range(5) if c != own)
    assert abs(rep.per_point[700] - (b - a) / max(a, b)) <= 1e-12
