from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.cluster.hierarchy import cophenet, linkage
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial.distance import squareform

from econokit import distance as D
from econokit.exceptions import DataError, DegenerateError
from econokit.series import TimeSeries


def levels(r):
    return 100.0 * np.concatenate([[1.0], np.cumprod(1.0 + np.asarray(r))])


def ts(r, label=""):
    return TimeSeries.from_values(levels(r), label)


def random_matrix(rng, n):
    d = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    d[iu] = rng.random(iu[0].size)
    return D.DistanceMatrix(tuple("ABCDEFG"[:n]), d + d.T)


def brute_force_mst_weight(d):
    n = d.shape[0]
    edges = list(combinations(range(n), 2))
    best = np.inf
    for tree in combinations(edges, n - 1):
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                i = parent[i]
            return i

        ok = True
        for i, j in tree:
            ri, rj = find(i), find(j)
            if ri == rj:
                ok = False
                break
            parent[ri] = rj
        if ok:
            best = min(best, sum(d[i, j] for i, j in tree))
    return best


# ---------------------------------------------------------------- pair distances

def test_self_distance_is_exactly_zero():
    r = np.random.default_rng(0).normal(0, 0.01, 300)
    assert D.correlation_distance(ts(r), ts(r)) == 0.0


def test_anticorrelated_returns():
    r = np.random.default_rng(1).normal(0, 0.01, 300)
    assert D.correlation_from_returns(r, -r) == pytest.approx(2.0, abs=1e-12)


def test_independent_returns_window_500():
    rng = np.random.default_rng(2)
    d = [D.correlation_distance(ts(rng.normal(0, 0.01, 500)), ts(rng.normal(0, 0.01, 500)))
         for _ in range(20)]
    assert np.mean(d) == pytest.approx(np.sqrt(2), abs=0.1)


def test_correlation_matches_pearson():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(2, 200))
    c = np.corrcoef(a, b)[0, 1]
    assert D.correlation_from_returns(a, b) == pytest.approx(np.sqrt(2 * (1 - c)), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 100), st.floats(-1, 1), st.floats(0.01, 100), st.floats(-1, 1),
       st.integers(0, 2 ** 16))
def test_correlation_affine_invariance(a1, b1, a2, b2, seed):
    x, y = np.random.default_rng(seed).normal(size=(2, 100))
    base = D.correlation_from_returns(x, y)
    assert D.correlation_from_returns(a1 * x + b1, a2 * y + b2) == pytest.approx(base, abs=1e-9)


def test_correlation_window_and_errors():
    r = np.random.default_rng(4).normal(0, 0.01, 100)
    a, b = ts(r), ts(np.roll(r, 3))
    # returns recomputed from levels differ from r by rounding only
    assert D.correlation_distance(a, b, (10, 50)) == pytest.approx(
        D.correlation_from_returns(r[10:59], np.roll(r, 3)[10:59]), rel=1e-12)
    with pytest.raises(DegenerateError):
        D.correlation_distance(ts(np.zeros(50)), a, (0, 40))
    with pytest.raises(DataError):
        D.correlation_distance(a, b, (90, 50))
    with pytest.raises(DataError):
        D.correlation_distance(a, TimeSeries.from_values(a.values, start=5))


def test_entropy_rate_values():
    assert D.entropy_rate("ud" * 200, 2) == pytest.approx(0.0, abs=1e-12)
    assert D.entropy_rate("ud" * 200, 1) == pytest.approx(1.0)
    letters = "".join(np.random.default_rng(5).choice(["u", "d"], 100_000))
    assert D.entropy_rate(letters, 3) == pytest.approx(1.0, abs=0.001)


def test_entropy_distance_examples():
    rng = np.random.default_rng(6)
    fair = rng.choice([-0.01, 0.01], 1000)
    alt = np.tile([0.01, -0.01], 500)
    assert D.entropy_distance(ts(fair), ts(fair)) == 0.0
    assert D.entropy_distance(ts(alt), ts(fair)) == pytest.approx(1.0, abs=0.01)
    gaps = [D.entropy_distance(ts(rng.choice([-0.01, 0.01], 1000)),
                               ts(rng.choice([-0.01, 0.01], 1000))) for _ in range(50)]
    assert max(gaps) < 0.05


def test_entropy_distance_grows_to_one():
    rng = np.random.default_rng(7)
    small = np.mean([D.entropy_distance(ts(np.tile([0.01, -0.01], 10)),
                                        ts(rng.choice([-0.01, 0.01], 20))) for _ in range(50)])
    large = np.mean([D.entropy_distance(ts(np.tile([0.01, -0.01], 1000)),
                                        ts(rng.choice([-0.01, 0.01], 2000))) for _ in range(10)])
    assert small < large and abs(large - 1.0) < abs(small - 1.0)


def test_entropy_errors():
    with pytest.raises(DegenerateError):
        D.entropy_distance(ts(np.full(40, 0.01)), ts(np.tile([0.01, -0.01], 20)))
    with pytest.raises(DataError):
        D.entropy_distance(ts([0.01, -0.01] * 3), ts([0.01, -0.01] * 3), m=2)


# ---------------------------------------------------------------- matrices and tracks

def _series_set(seed, k=5, n=400):
    rng = np.random.default_rng(seed)
    return {f"S{i}": ts(rng.normal(0, 0.01, n), f"S{i}") for i in range(k)}


@pytest.mark.parametrize("kind", ["correlation", "entropy"])
def test_matrix_invariants(kind):
    m = D.distance_matrix(_series_set(0), kind, window=(0, 300))
    assert np.array_equal(m.d, m.d.T)
    assert np.all(np.diag(m.d) == 0.0)
    assert np.all(m.d >= 0) and np.all(np.isfinite(m.d))
    if kind == "correlation":
        assert m.d.max() <= 2.0


def test_matrix_with_duplicate_series_has_zero_entry():
    s = _series_set(1, 3)
    s["copy"] = TimeSeries(s["S0"].timestamps, s["S0"].values, "copy")
    m = D.distance_matrix(s)
    assert m.d[0, 3] == 0.0 and m.d[3, 0] == 0.0


def test_matrix_validation():
    with pytest.raises(DataError):
        D.DistanceMatrix(("a", "b"), [[0, 1], [2, 0]])
    with pytest.raises(DataError):
        D.DistanceMatrix(("a", "b"), [[0, np.inf], [np.inf, 0]])
    with pytest.raises(DataError):
        D.distance_matrix(_series_set(0), "euclid")


def test_common_support_intersection():
    a = ts(np.random.default_rng(0).normal(0, 0.01, 99), "a")
    b = TimeSeries(np.arange(20, 120), levels(np.random.default_rng(1).normal(0, 0.01, 99)), "b")
    track = D.rolling_mean_distance({"a": a, "b": b}, 40, 20)
    assert track.window_starts[0] == 20 and track.window_ends[-1] <= 99


def test_track_identical_pair_is_zero():
    r = np.random.default_rng(8).normal(0, 0.01, 500)
    track = D.rolling_mean_distance({"a": ts(r), "b": ts(r)}, 100, 50)
    assert np.all(track.mean_distance == 0.0)


def test_track_convergent_set_has_negative_slope():
    rng = np.random.default_rng(9)
    n = 2000
    common = rng.normal(0, 0.01, n)
    w = np.linspace(0.0, 1.0, n)
    s = {f"c{i}": ts(w * common + (1 - w) * rng.normal(0, 0.01, n), f"c{i}") for i in range(4)}
    track = D.rolling_mean_distance(s, 200, 100)
    assert track.slope < 0
    assert track.mean_distance[0] > 1.2 and track.mean_distance[-1] < 0.3


def test_track_null_slope():
    s = _series_set(10, 4, 3000)
    track = D.rolling_mean_distance(s, 200, 200)
    assert abs(track.slope) < 3 * track.slope_stderr


def test_track_subset_and_errors():
    s = _series_set(11, 4)
    track = D.rolling_mean_distance(s, 100, 50, subset=["S1", "S3"])
    full = D.distance_matrix(s, window=(0, 100), labels=["S1", "S3"])
    assert track.mean_distance[0] == full.d[0, 1]
    with pytest.raises(DataError):
        D.rolling_mean_distance(s, 100, subset=["S1"])
    with pytest.raises(DataError):
        D.rolling_mean_distance(s, 1000)


# ---------------------------------------------------------------- hierarchy

def test_hand_mst():
    d = np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0]], dtype=float)
    h = D.mst(D.DistanceMatrix(("A", "B", "C"), d))
    assert h.edge_labels() == [("A", "B", 1.0), ("A", "C", 2.0)]
    assert h.total_weight == 3.0


def test_equal_distances_tie_rule():
    n = 5
    d = 0.7 * (1 - np.eye(n))
    h = D.mst(D.DistanceMatrix(tuple("ABCDE"), d))
    assert h.total_weight == pytest.approx((n - 1) * 0.7)
    assert [(a, b) for a, b, _ in h.edge_labels()] == [("A", "B"), ("A", "C"), ("A", "D"),
                                                       ("A", "E")]


def test_tie_rule_follows_label_order_not_position():
    d = 0.5 * (1 - np.eye(3))
    h = D.mst(D.DistanceMatrix(("C", "A", "B"), d))
    assert [(a, b) for a, b, _ in h.edge_labels()] == [("A", "B"), ("A", "C")]


@pytest.mark.parametrize("case", range(100))
def test_mst_matches_exhaustive_enumeration(case):
    m = random_matrix(np.random.default_rng(case), 6)
    h = D.mst(m)
    assert len(h.mst_edges) == 5
    assert h.total_weight == pytest.approx(brute_force_mst_weight(m.d), abs=1e-12)


@pytest.mark.parametrize("case", range(5))
def test_mst_seven_labels_and_scipy(case):
    m = random_matrix(np.random.default_rng(1000 + case), 7)
    h = D.mst(m)
    assert h.total_weight == pytest.approx(brute_force_mst_weight(m.d), abs=1e-12)
    assert h.total_weight == pytest.approx(minimum_spanning_tree(m.d).sum(), abs=1e-12)


@pytest.mark.parametrize("case", range(10))
def test_single_linkage_against_scipy(case):
    m = random_matrix(np.random.default_rng(case), 7)
    h = D.mst(m)
    ref = linkage(squareform(m.d), "single")
    np.testing.assert_allclose(h.linkage[:, 2], ref[:, 2], atol=1e-15)
    np.testing.assert_allclose(h.linkage[:, 3], ref[:, 3])
    np.testing.assert_allclose(squareform(h.ultrametric), cophenet(ref), atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 20), st.integers(2, 9))
def test_tree_and_ultrametric_properties(seed, n):
    m = random_matrix(np.random.default_rng(seed), min(n, 7))
    h = D.mst(m)
    L = len(m.labels)
    assert len(h.mst_edges) == L - 1
    # connected and acyclic: union-find joins every edge
    parent = list(range(L))

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for i, j, _ in h.mst_edges:
        assert find(i) != find(j)
        parent[find(i)] = find(j)
    assert len({find(i) for i in range(L)}) == 1
    assert np.all(h.ultrametric <= m.d + 1e-15)
    u = h.ultrametric
    for i, j, k in combinations(range(L), 3):
        assert u[i, j] <= max(u[i, k], u[k, j]) + 1e-15
