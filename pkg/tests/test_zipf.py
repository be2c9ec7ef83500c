import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from econokit import zipf
from econokit.exceptions import DataError, DegenerateError
from econokit.series import TimeSeries, returns
from econokit.synthetic import pareto_sample, zipf_sample
from econokit.zipf import Alphabet


def test_two_letter_sign_map():
    assert zipf.encode([0.1, -0.2, 0.3], Alphabet(2)) == "udu"


def test_three_letter_threshold_map():
    assert zipf.encode([0.001, -0.3], Alphabet(3, (0.01,))) == "sd"


def test_zero_ties():
    assert zipf.encode(np.zeros(4), Alphabet(2)) == "dddd"
    assert zipf.encode([0.0], Alphabet(3, (0.0,))) == "s"
    assert zipf.encode([0.0], Alphabet(5, (0.0, 0.1))) == "s"


def test_five_letter_bands():
    a = Alphabet(5, (0.01, 0.05))
    r = [0.2, 0.05, 0.03, 0.01, 0.0, -0.01, -0.03, -0.05, -0.2]
    assert zipf.encode(r, a) == "uppsssnnd"


def test_encode_accepts_return_series():
    r = returns(TimeSeries.from_values([1.0, 2.0, 1.0, 1.0]), "raw-difference")
    assert zipf.encode(r, Alphabet(2)) == "udd"


@pytest.mark.parametrize("size,th", [(2, (0.1,)), (3, ()), (5, (0.2, 0.1)), (5, (-0.1, 0.1)),
                                     (4, ())])
def test_alphabet_invariants(size, th):
    with pytest.raises(DataError):
        Alphabet(size, th)


def test_default_five_letter_cuts_equalise_letters():
    r = np.random.default_rng(0).normal(size=100_000)
    a = Alphabet.from_returns(5, r)
    counts = zipf.count_words(zipf.encode(r, a), 1).probabilities
    assert set(counts) == set("upsnd")
    for p in counts.values():
        assert p == pytest.approx(0.2, abs=0.01)


def test_count_words_hand_examples():
    t = zipf.count_words("uudu", 2)
    assert dict(t.counts) == {"uu": 1, "ud": 1, "du": 1} and t.total == 3
    t = zipf.count_words("uudu", 2, overlapping=False)
    assert dict(t.counts) == {"uu": 1, "du": 1} and t.total == 2


def test_count_words_too_long():
    with pytest.raises(DataError):
        zipf.count_words("ud", 3)


def test_uniform_letters_binomial():
    rng = np.random.default_rng(1)
    L = 80_000
    seq = "".join(rng.choice(["u", "d"], size=L))
    t = zipf.count_words(seq, 3)
    assert len(t) == 8
    sigma = np.sqrt(0.125 * 0.875 / t.total)
    for p in t.probabilities.values():
        assert abs(p - 0.125) < 3 * sigma * 2  # overlapping words are correlated


@settings(max_examples=60, deadline=None)
@given(st.text(alphabet="ud", min_size=1, max_size=60), st.integers(1, 6))
def test_table_invariants(seq, m):
    if m > len(seq):
        return
    ov = zipf.count_words(seq, m, True)
    no = zipf.count_words(seq, m, False)
    L = len(seq)
    assert ov.total == L - m + 1 == sum(ov.counts.values())
    assert no.total == L // m == sum(no.counts.values())
    assert ov.total - no.total == L - m + 1 - L // m
    assert sum(ov.probabilities.values()) == pytest.approx(1.0, abs=1e-12)
    assert 0 not in ov.counts.values()
    assert rank_sum(ov) == ov.total


def rank_sum(table):
    return int(zipf.rank_frequency(table).counts.sum())


def test_permutation_fixture():
    seq = "uuuuddddud"
    perm = "udududuudd"
    assert sorted(seq) == sorted(perm)
    assert zipf.count_words(seq, 1).counts == zipf.count_words(perm, 1).counts
    assert zipf.count_words(seq, 2).counts != zipf.count_words(perm, 2).counts


def test_rank_frequency_tie_rule():
    rf = zipf.rank_frequency({"uu": 5, "ud": 3, "du": 3})
    assert rf.pairs() == [(1, 5), (2, 3), (3, 3)]
    assert rf.words == ("uu", "ud", "du")
    assert zipf.rank_frequency({"ss": 2, "ps": 2, "nd": 2, "x": 2}).words == ("ps", "ss", "nd", "x")


def test_rank_frequency_harmonic_and_singleton():
    table = {f"w{r:03d}": 100.0 / r for r in range(1, 51)}
    rf = zipf.rank_frequency(table)
    np.testing.assert_allclose(rf.counts, 100.0 / rf.ranks)
    assert zipf.rank_frequency({"u": 7}).pairs() == [(1, 7)]
    with pytest.raises(DataError):
        zipf.rank_frequency({})


def test_zipf_harmonic_exact():
    r = np.arange(1, 51)
    fit = zipf.fit_zipf(100.0 / r)
    assert fit.zeta == pytest.approx(1.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_zipf_exponent_one_and_a_half():
    r = np.arange(1, 40)
    assert zipf.fit_zipf(1e4 * r ** -1.5).zeta == pytest.approx(1.5, abs=1e-12)


def test_zipf_probability_and_count_fits_agree():
    r = np.arange(1, 60)
    counts = np.floor(5000.0 / r ** 1.2)
    a = zipf.fit_zipf(counts)
    b = zipf.fit_zipf(counts / counts.sum(), exclude_hapax=False)
    assert a.zeta == pytest.approx(b.zeta, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e6))
def test_zipf_scale_invariance(k):
    counts = np.sort(np.random.default_rng(3).integers(2, 500, size=40))[::-1].astype(float)
    base = zipf.fit_zipf(counts, exclude_hapax=False).zeta
    assert zipf.fit_zipf(k * counts, exclude_hapax=False).zeta == pytest.approx(base, abs=1e-12)


def test_zipf_hapax_excluded_by_default():
    counts = np.array([40, 20, 13, 10, 8, 1, 1, 1, 1, 1], dtype=float)
    fit = zipf.fit_zipf(counts)
    assert fit.n_points == 5 and fit.rank_range == (1, 5)
    assert zipf.fit_zipf(counts, exclude_hapax=False).n_points == 10


def test_zipf_errors():
    with pytest.raises(DataError):
        zipf.fit_zipf([5.0, 4.0, 3.0, 2.0])
    with pytest.raises(DataError):
        zipf.fit_zipf([5.0, 4.0, 3.0, 2.0, 2.0, 0.0], exclude_hapax=False)
    with pytest.raises(DataError):
        zipf.fit_zipf([1.0, 2.0, 3.0, 4.0, 5.0])


@pytest.mark.parametrize("seed", range(3))
def test_zipf_sampler(seed):
    counts = np.bincount(zipf_sample(100_000, 1000, 1.0, rng=seed))
    rf = np.sort(counts[counts > 0])[::-1]
    z = zipf.fit_zipf(rf)
    lam = zipf.fit_pareto(counts[counts > 0]).lam
    assert z.zeta == pytest.approx(1.0, abs=0.1)
    assert abs(zipf.exponent_relation_residual(z.zeta, lam)) < 0.15


@pytest.mark.parametrize("seed", range(3))
def test_pareto_sampler(seed):
    assert zipf.fit_pareto(pareto_sample(20_000, 1.0, rng=seed)).lam == pytest.approx(1.0, abs=0.1)


def test_pareto_errors():
    with pytest.raises(DegenerateError):
        zipf.fit_pareto(np.full(30, 4.0))
    with pytest.raises(DataError):
        zipf.fit_pareto(np.arange(1.0, 6.0))


def test_ccdf_uses_at_least():
    f, p = zipf.tail_ccdf([1, 1, 2, 5])
    assert f.tolist() == [1, 2, 5]
    assert p.tolist() == [1.0, 0.5, 0.25]


@pytest.mark.parametrize("z,lam,res", [(1, 1, 0.0), (1.5, 2, 0.0), (1, 2, -0.5)])
def test_relation_residual(z, lam, res):
    assert zipf.exponent_relation_residual(z, lam) == res


def test_word_table_digest_is_stable():
    a = zipf.count_words("uudduudu", 2)
    b = zipf.count_words(list("uudduudu"), 2)
    assert a.digest() == b.digest()
    assert a.digest() != zipf.count_words("uudduudu", 3).digest()


def test_encoder_estimator():
    from sklearn.base import clone

    r = np.random.default_rng(4).normal(size=5000)
    enc = zipf.ZipfEncoder(alphabet_size=3).fit(r)
    letters = enc.transform(r)
    assert len(letters) == 5000 and set(letters) == set("usd")
    assert enc.word_table(r).total == 5000 - 3 + 1
    fixed = zipf.ZipfEncoder(5, thresholds=(0.1, 0.5)).fit(r)
    assert fixed.alphabet_.thresholds == (0.1, 0.5)
    assert clone(enc).get_params()["alphabet_size"] == 3
