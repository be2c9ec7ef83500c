"""Distances between series, rolling mean-distance tracks and MST hierarchies.

Two distances are provided, both computed on returns inside a window:

* correlation: ``sqrt(2 (1 - c))`` with ``c`` the Pearson coefficient, in ``[0, 2]``;
* entropy: the absolute difference of block-entropy rates of the up/down
  letter sequences, in ``[0, 1]`` bits.

The hierarchy is the minimum spanning tree of a distance matrix together
with the equivalent single-linkage merge sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Optional, Sequence

import numpy as np

from ._validation import check_scalar, ols_line
from .exceptions import DataError, DegenerateError
from .series import TimeSeries
from .zipf import Alphabet, count_words, encode

KINDS = ("correlation", "entropy")


def _window_returns(series, window):
    """Simple returns of the levels inside ``window = (start, length)``."""
    if isinstance(series, TimeSeries):
        ts, v = series.timestamps, series.values
    else:
        v = np.asarray(series, dtype=np.float64)
        ts = np.arange(v.size)
    if window is not None:
        start, length = window
        if start < 0 or length < 2 or start + length > v.size:
            raise DataError(f"window {window} outside a series of {v.size} points")
        ts, v = ts[start:start + length], v[start:start + length]
    if np.any(v[:-1] == 0):
        raise DataError("zero level: returns undefined")
    return ts, v[1:] / v[:-1] - 1.0


def _aligned(a, b, window):
    ta, ra = _window_returns(a, window)
    tb, rb = _window_returns(b, window)
    if not np.array_equal(ta, tb):
        raise DataError("windows do not align in time")
    return ra, rb


def _unit(x):
    z = x - x.mean()
    norm = np.sqrt(z @ z)
    if norm == 0.0 or np.ptp(x) == 0.0:
        raise DegenerateError("constant series in window: correlation undefined")
    return z / norm


def correlation_from_returns(ra, rb):
    """``sqrt(2 (1 - c))`` computed as the distance of the standardised vectors."""
    ra, rb = np.asarray(ra, dtype=np.float64), np.asarray(rb, dtype=np.float64)
    if ra.size != rb.size:
        raise DataError("return series differ in length")
    if ra.size < 3:
        raise DataError("correlation needs at least 3 returns")
    za, zb = _unit(ra), _unit(rb)
    diff = za - zb
    return float(min(np.sqrt(diff @ diff), 2.0))


def correlation_distance(a, b, window=None):
    """Correlation distance of two level series over ``window = (start, length)``."""
    return correlation_from_returns(*_aligned(a, b, window))


def entropy_rate(letters, m=2):
    """Block-entropy rate ``H_m - H_{m-1}`` in bits, from overlapping blocks.

    ``H_0 = 0``, so ``m = 1`` gives the single-letter entropy.
    """
    check_scalar(m, "m", low=1, integer=True)

    def block(k):
        if k == 0:
            return 0.0
        p = np.array(list(count_words(letters, k).counts.values()), dtype=np.float64)
        p /= p.sum()
        return float(-(p * np.log2(p)).sum())

    return max(block(m) - block(m - 1), 0.0)


def entropy_from_returns(ra, rb, m=2):
    ra, rb = np.asarray(ra, dtype=np.float64), np.asarray(rb, dtype=np.float64)
    if ra.size != rb.size:
        raise DataError("return series differ in length")
    if ra.size < 4 * m:
        raise DataError(f"window must hold at least {4 * m} returns for m = {m}")
    rates = []
    for r in (ra, rb):
        letters = encode(r, Alphabet(2))
        if len(set(letters)) < 2:
            raise DegenerateError("encoding uses a single letter throughout")
        rates.append(entropy_rate(letters, m))
    return abs(rates[0] - rates[1])


def entropy_distance(a, b, window=None, m=2):
    """Difference of up/down block-entropy rates over ``window = (start, length)``."""
    return entropy_from_returns(*_aligned(a, b, window), m=m)


# --------------------------------------------------------------------------- matrices

@dataclass(frozen=True)
class DistanceMatrix:
    labels: tuple
    d: np.ndarray
    window: Optional[tuple] = None
    kind: str = "correlation"

    def __post_init__(self):
        d = np.array(self.d, dtype=np.float64, copy=True)
        n = len(self.labels)
        if d.shape != (n, n):
            raise DataError(f"matrix shape {d.shape} does not match {n} labels")
        if not np.all(np.isfinite(d)):
            raise DataError("non-finite distance")
        if np.any(d < 0) or np.any(np.diag(d) != 0) or not np.array_equal(d, d.T):
            raise DataError("distances must be non-negative, symmetric, zero on the diagonal")
        if len(set(self.labels)) != n:
            raise DataError("duplicate labels")
        d.setflags(write=False)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "d", d)

    def condensed(self):
        return self.d[np.triu_indices(len(self.labels), 1)]


def _common_returns(series: Mapping[str, TimeSeries], labels):
    common = None
    for lab in labels:
        ts = series[lab].timestamps
        common = ts if common is None else np.intersect1d(common, ts)
    if common is None or common.size < 4:
        raise DataError("insufficient common time support")
    out = {}
    for lab in labels:
        s = series[lab]
        v = s.values[np.isin(s.timestamps, common)]
        if np.any(v[:-1] == 0):
            raise DataError(f"zero level in {lab!r}")
        out[lab] = v[1:] / v[:-1] - 1.0
    return common, out


def _pair_distance(kind, ra, rb, m):
    if kind == "correlation":
        return correlation_from_returns(ra, rb)
    return entropy_from_returns(ra, rb, m)


def _matrix(rets, labels, kind, m, sl=slice(None)):
    n = len(labels)
    d = np.zeros((n, n))
    for i, j in combinations(range(n), 2):
        d[i, j] = d[j, i] = _pair_distance(kind, rets[labels[i]][sl], rets[labels[j]][sl], m)
    return d


def distance_matrix(series: Mapping[str, TimeSeries], kind="correlation", window=None, m=2,
                    labels: Optional[Sequence[str]] = None) -> DistanceMatrix:
    """Pairwise distances over the common time support.

    ``window = (start, length)`` counts levels on the common support.
    """
    if kind not in KINDS:
        raise DataError(f"unknown distance kind {kind!r}")
    labels = tuple(labels or series)
    if len(labels) < 2:
        raise DataError("need at least two series")
    _, rets = _common_returns(series, labels)
    sl = slice(None)
    if window is not None:
        start, length = window
        if start < 0 or length < 2 or start + length - 1 > len(rets[labels[0]]):
            raise DataError(f"window {window} outside the common support")
        sl = slice(start, start + length - 1)
    return DistanceMatrix(labels, _matrix(rets, labels, kind, m, sl), window, kind)


@dataclass(frozen=True)
class MeanDistanceTrack:
    window_starts: np.ndarray
    window_ends: np.ndarray
    mean_distance: np.ndarray
    slope: float
    slope_stderr: float
    intercept: float
    kind: str
    labels: tuple

    def __len__(self):
        return self.mean_distance.size

    def as_dict(self):
        return {"kind": self.kind, "labels": list(self.labels),
                "window_starts": self.window_starts.tolist(),
                "window_ends": self.window_ends.tolist(),
                "mean_distance": self.mean_distance.tolist(),
                "slope": self.slope, "slope_stderr": self.slope_stderr,
                "intercept": self.intercept}


def rolling_mean_distance(series: Mapping[str, TimeSeries], window_length, step=1,
                          kind="correlation", subset: Optional[Sequence[str]] = None,
                          m=2) -> MeanDistanceTrack:
    """Mean off-diagonal distance per window and its linear trend.

    Windows hold ``window_length`` levels of the common support and advance
    by ``step``. The slope of the track against the window end timestamp is
    reported; a negative slope means the subset is drawing together.
    """
    if kind not in KINDS:
        raise DataError(f"unknown distance kind {kind!r}")
    check_scalar(window_length, "window_length", low=4, integer=True)
    check_scalar(step, "step", low=1, integer=True)
    labels = tuple(subset or series)
    if len(labels) < 2:
        raise DataError("need at least two series in the subset")
    missing = [lab for lab in labels if lab not in series]
    if missing:
        raise DataError(f"unknown labels {missing}")
    common, rets = _common_returns(series, labels)
    n_ret = common.size - 1
    nr = window_length - 1
    starts = list(range(0, n_ret - nr + 1, step))
    if len(starts) < 1:
        raise DataError("common support shorter than one window")
    iu = np.triu_indices(len(labels), 1)
    means = np.array([_matrix(rets, labels, kind, m, slice(s, s + nr))[iu].mean()
                      for s in starts])
    ends = common[np.array(starts) + nr]
    if len(starts) >= 3:
        slope, icpt, err, _ = ols_line(ends.astype(np.float64), means)
    else:
        slope, icpt, err = float("nan"), float("nan"), float("nan")
    return MeanDistanceTrack(common[np.array(starts)], ends, means, slope, err, icpt, kind,
                             labels)


# --------------------------------------------------------------------------- hierarchy

@dataclass(frozen=True)
class HierarchyResult:
    """Minimum spanning tree and the matching single-linkage dendrogram.

    ``linkage`` follows the SciPy layout: row ``k`` merges clusters
    ``a, b`` at height ``h`` into cluster ``L + k`` of ``size`` leaves.
    ``ultrametric[i, j]`` is the merge height at which ``i`` and ``j`` join,
    equal to the largest edge on their tree path.
    """

    labels: tuple
    mst_edges: list
    linkage: np.ndarray
    ultrametric: np.ndarray

    @property
    def total_weight(self):
        return float(sum(w for _, _, w in self.mst_edges))

    def edge_labels(self):
        return [(self.labels[i], self.labels[j], w) for i, j, w in self.mst_edges]


class _DisjointSet:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root


def mst(matrix: DistanceMatrix) -> HierarchyResult:
    """Kruskal's algorithm; equal weights are taken in label order.

    Edge ``(i, j)`` with ``i < j`` in label order is ranked by
    ``(distance, label_i, label_j)``, which makes the tree unique.
    """
    if not isinstance(matrix, DistanceMatrix):
        raise DataError("mst expects a DistanceMatrix")
    labels, d = matrix.labels, matrix.d
    n = len(labels)
    if n < 2:
        raise DataError("need at least two labels")
    pairs = []
    for i, j in combinations(range(n), 2):
        a, b = (i, j) if labels[i] <= labels[j] else (j, i)
        pairs.append((d[i, j], labels[a], labels[b], a, b))
    pairs.sort(key=lambda p: p[:3])
    ds = _DisjointSet(n)
    cluster = list(range(n))              # dendrogram id of each root
    size = [1] * n
    members = {i: [i] for i in range(n)}
    edges, link = [], []
    ultra = np.zeros((n, n))
    for w, _, _, a, b in pairs:
        ra, rb = ds.find(a), ds.find(b)
        if ra == rb:
            continue
        edges.append((a, b, float(w)))
        ca, cb = sorted((cluster[ra], cluster[rb]))
        for p in members[ra]:
            for q in members[rb]:
                ultra[p, q] = ultra[q, p] = w
        ds.parent[rb] = ra
        members[ra] += members.pop(rb)
        size[ra] += size[rb]
        link.append((ca, cb, float(w), size[ra]))
        cluster[ra] = n + len(link) - 1
        if len(edges) == n - 1:
            break
    return HierarchyResult(labels, edges, np.array(link, dtype=np.float64), ultra)
