"""Letter coding of return series, word statistics and Zipf/Pareto exponents.

A return series is mapped to letters by thresholding, the letter string is
cut into words of ``m`` letters, and the word counts are ranked. The ranked
counts follow ``N_r ~ r**-zeta`` and the count values themselves a
cumulative tail ``P[f >= F] ~ F**-lambda``; for a pure power law the two
exponents obey ``1/lambda + zeta = 2``.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_1d_float, check_scalar, ols_line
from .exceptions import DataError, DegenerateError
from .series import ReturnSeries

LETTERS = {2: ("u", "d"), 3: ("u", "s", "d"), 5: ("u", "p", "s", "n", "d")}
N_THRESHOLDS = {2: 0, 3: 1, 5: 2}
# letter order used to break count ties, from the largest rise to the largest fall
LETTER_ORDER = {c: i for i, c in enumerate("upsnd")}


@dataclass(frozen=True)
class Alphabet:
    """Letter set and the fluctuation cuts between letters.

    Size 2 uses the sign (``r > 0`` is ``u``, zero goes to ``d``). Size 3 has
    one cut ``s``: ``|r| <= s`` is ``s``. Size 5 has cuts ``s < b``:
    ``u`` above ``b``, ``p`` in ``(s, b]``, ``s`` for ``|r| <= s``, ``n`` in
    ``[-b, -s)`` and ``d`` below ``-b``.
    """

    size: int
    thresholds: tuple = ()

    def __post_init__(self):
        if self.size not in LETTERS:
            raise DataError(f"alphabet size must be 2, 3 or 5, got {self.size}")
        th = tuple(float(v) for v in self.thresholds)
        if len(th) != N_THRESHOLDS[self.size]:
            raise DataError(f"a {self.size}-letter alphabet needs "
                            f"{N_THRESHOLDS[self.size]} threshold(s), got {len(th)}")
        if any(not np.isfinite(v) or v < 0 for v in th):
            raise DataError("thresholds must be finite and non-negative")
        if any(b <= a for a, b in zip(th, th[1:])):
            raise DataError("thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", th)

    @property
    def letters(self):
        return LETTERS[self.size]

    @classmethod
    def from_returns(cls, size, returns):
        """Default cuts from the data.

        Size 3 puts a third of the returns in ``s``. Size 5 uses the 20% and
        60% quantiles of ``|r|``, which are the 20/40/60/80 percentile cuts of
        a symmetric distribution and make the five letters equally likely.
        """
        if size == 2:
            return cls(2)
        a = np.abs(_values(returns))
        if size == 3:
            return cls(3, (float(np.quantile(a, 1 / 3)),))
        if size == 5:
            s, b = np.quantile(a, [0.2, 0.6])
            if not b > s:
                raise DegenerateError("returns too concentrated for distinct 5-letter cuts")
            return cls(5, (float(s), float(b)))
        raise DataError(f"alphabet size must be 2, 3 or 5, got {size}")


def _values(returns):
    if isinstance(returns, ReturnSeries):
        return returns.values
    return as_1d_float(returns, "returns", min_length=1)


def encode(returns, alphabet: Alphabet) -> str:
    """Map each return to a letter; returns a string with one letter per return."""
    r = _values(returns)
    if alphabet.size == 2:
        codes = np.where(r > 0, 0, 1)
    elif alphabet.size == 3:
        (s,) = alphabet.thresholds
        codes = np.where(np.abs(r) <= s, 1, np.where(r > 0, 0, 2))
    else:
        s, b = alphabet.thresholds
        codes = np.select([np.abs(r) <= s, r > b, r > 0, r >= -b], [2, 0, 1, 3], default=4)
    letters = np.array(alphabet.letters)
    return "".join(letters[codes].tolist())


@dataclass(frozen=True)
class WordTable:
    """Occurrence counts of ``m``-letter words.

    Only words that occur are stored. ``counts`` is kept in lexicographic key
    order so that equal tables serialise identically.
    """

    word_length: int
    overlapping: bool
    counts: Mapping[str, int]
    total: int
    sequence_length: int = 0

    @property
    def probabilities(self):
        return {w: c / self.total for w, c in self.counts.items()}

    def __len__(self):
        return len(self.counts)

    def digest(self):
        """SHA-256 of a canonical JSON form, for reproducibility checks."""
        payload = json.dumps({"m": self.word_length, "overlapping": self.overlapping,
                              "counts": dict(self.counts)}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


def count_words(letters, m, overlapping=True) -> WordTable:
    """Count words of ``m`` letters, either at every offset or in disjoint blocks."""
    check_scalar(m, "m", low=1, integer=True)
    seq = "".join(letters) if not isinstance(letters, str) else letters
    L = len(seq)
    if m > L:
        raise DataError(f"word length {m} exceeds sequence length {L}")
    step = 1 if overlapping else m
    last = L - m + 1 if overlapping else (L // m) * m
    counter = Counter(seq[i:i + m] for i in range(0, last, step))
    counts = {w: counter[w] for w in sorted(counter)}
    return WordTable(int(m), bool(overlapping), counts, sum(counts.values()), L)


def word_key(word):
    """Lexicographic key in alphabet order (u < p < s < n < d), other symbols after."""
    return tuple((LETTER_ORDER.get(c, len(LETTER_ORDER)), c) for c in word)


@dataclass(frozen=True)
class RankFrequency:
    """Words ordered by decreasing count; equal counts ordered by :func:`word_key`."""

    words: tuple
    counts: np.ndarray

    @property
    def ranks(self):
        return np.arange(1, self.counts.size + 1)

    def pairs(self):
        return list(zip(self.ranks.tolist(), self.counts.tolist()))

    def __len__(self):
        return self.counts.size


def rank_frequency(table) -> RankFrequency:
    """Rank the words of a table (or any word -> count mapping)."""
    counts = table.counts if isinstance(table, WordTable) else dict(table)
    if not counts:
        raise DataError("empty word table")
    items = sorted(counts.items(), key=lambda kv: (-kv[1], word_key(kv[0])))
    return RankFrequency(tuple(w for w, _ in items),
                         np.array([c for _, c in items], dtype=np.float64))


@dataclass(frozen=True)
class ZipfFit:
    zeta: float
    stderr: float
    rank_range: tuple
    r_squared: float
    intercept: float
    n_points: int

    def predict(self, ranks):
        return np.exp(self.intercept) * np.asarray(ranks, dtype=np.float64) ** -self.zeta


def _ranked_counts(ranked):
    if isinstance(ranked, RankFrequency):
        return ranked.counts
    if isinstance(ranked, WordTable):
        return rank_frequency(ranked).counts
    c = as_1d_float(ranked, "counts", min_length=1)
    if np.any(np.diff(c) > 0):
        raise DataError("ranked counts must be non-increasing")
    return c


def fit_zipf(ranked, rank_range=None, exclude_hapax=True, min_ranks=5) -> ZipfFit:
    """Rank-frequency exponent ``zeta`` from a log-log least-squares line.

    Args:
        ranked: RankFrequency, WordTable, or counts already sorted in
            decreasing order (rank 1 first).
        rank_range: Inclusive ``(r_min, r_max)``; default is every rank.
        exclude_hapax: Drop ranks whose count is 1 (finite-size flattening).
        min_ranks: Minimum number of ranks left for the fit.
    """
    counts = _ranked_counts(ranked)
    ranks = np.arange(1, counts.size + 1, dtype=np.float64)
    lo, hi = (1, counts.size) if rank_range is None else rank_range
    keep = (ranks >= lo) & (ranks <= hi)
    if exclude_hapax:
        keep &= counts != 1
    if np.any(counts[keep] <= 0):
        raise DataError("zero counts inside the fit range")
    if keep.sum() < min_ranks:
        raise DataError(f"need at least {min_ranks} ranks in the fit range, got {keep.sum()}")
    slope, icpt, err, r2 = ols_line(np.log(ranks[keep]), np.log(counts[keep]))
    used = ranks[keep]
    return ZipfFit(-slope, err, (int(used[0]), int(used[-1])), r2, icpt, int(keep.sum()))


@dataclass(frozen=True)
class ParetoFit:
    lam: float
    stderr: float
    tail_fraction: float
    r_squared: float
    intercept: float
    n_points: int

    @property
    def lambda_(self):
        return self.lam


def tail_ccdf(values):
    """Distinct values ``f`` and the empirical fraction ``P[X >= f]``."""
    v = np.sort(as_1d_float(values, "values"))
    distinct, first = np.unique(v, return_index=True)
    return distinct, (v.size - first) / v.size


def fit_pareto(frequencies, tail_fraction=0.5, min_distinct=10) -> ParetoFit:
    """Cumulative-tail exponent ``lambda`` of a sample of frequencies.

    The empirical ``P[X >= f]`` is evaluated at each distinct value, and a
    log-log line is fitted over the largest ``tail_fraction`` of the distinct
    values. Using ``>=`` keeps the largest value at a positive probability.
    """
    check_scalar(tail_fraction, "tail_fraction", low=0.0, high=1.0, low_open=True)
    f, p = tail_ccdf(frequencies)
    if f.size == 1:
        raise DegenerateError("all frequencies are equal")
    if f.size < min_distinct:
        raise DataError(f"need at least {min_distinct} distinct values, got {f.size}")
    if f[0] <= 0:
        raise DataError("frequencies must be positive")
    k = max(int(round(tail_fraction * f.size)), 3)
    slope, icpt, err, r2 = ols_line(np.log(f[-k:]), np.log(p[-k:]))
    return ParetoFit(-slope, err, float(tail_fraction), r2, icpt, k)


def exponent_relation_residual(zeta, lam):
    """``1/lambda + zeta - 2``; zero when the two exponents are consistent."""
    check_scalar(lam, "lambda", low=0.0, low_open=True)
    return 1.0 / lam + zeta - 2.0


class ZipfEncoder(TransformerMixin, BaseEstimator):
    """Learn letter thresholds from returns and encode series as letters.

    Parameters
    ----------
    alphabet_size : {2, 3, 5}
    thresholds : tuple or None
        Fixed cuts; when None they are estimated in ``fit``.
    word_length : int
        Word length used by :meth:`word_table`.
    overlapping : bool
    """

    def __init__(self, alphabet_size=2, thresholds=None, word_length=3, overlapping=True):
        self.alphabet_size = alphabet_size
        self.thresholds = thresholds
        self.word_length = word_length
        self.overlapping = overlapping

    def fit(self, X, y=None):
        if self.thresholds is None:
            self.alphabet_ = Alphabet.from_returns(self.alphabet_size, X)
        else:
            self.alphabet_ = Alphabet(self.alphabet_size, tuple(self.thresholds))
        return self

    def transform(self, X):
        check_is_fitted(self, "alphabet_")
        return encode(X, self.alphabet_)

    def word_table(self, X) -> WordTable:
        return count_words(self.transform(X), self.word_length, self.overlapping)
