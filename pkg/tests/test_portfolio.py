import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from econokit import portfolio as pf
from econokit.exceptions import DataError
from econokit.series import TimeSeries
from econokit.zipf import WordTable, count_words


def alternating(n, up_first=True, step=1.1):
    factors = np.tile([step, 1 / step] if up_first else [1 / step, step], n)[: n - 1]
    return 100.0 * np.concatenate([[1.0], np.cumprod(factors)])


def antiphase_pair(n=41):
    return {"A": TimeSeries.from_values(alternating(n, True), "A"),
            "B": TimeSeries.from_values(alternating(n, False), "B")}


def coin_flip_prices(seed, n=1000, k=3):
    rng = np.random.default_rng(seed)
    return {f"x{j}": TimeSeries.from_values(100 * np.cumprod(1 + 0.01 * rng.choice([-1, 1], n)),
                                            f"x{j}") for j in range(k)}


# ---------------------------------------------------------------- metrics

def test_sharpe_examples():
    assert pf.sharpe_ratio(0.1, 0.2) == 0.5
    assert pf.sharpe_ratio(0.0, 0.3) == 0.0
    with pytest.raises(DataError):
        pf.sharpe_ratio(0.1, 0.0)


def test_beta_examples():
    m = np.random.default_rng(0).normal(size=200)
    assert pf.beta(m, m) == 1.0
    assert pf.beta(np.full(200, 0.3), m) == 0.0
    assert pf.beta(2 * m, m) == pytest.approx(2.0, rel=1e-14)


def test_beta_matches_printed_covariance_identity():
    rng = np.random.default_rng(1)
    m, p = rng.normal(size=500), rng.normal(size=500)
    printed = (np.mean(p * m) - p.mean() * m.mean()) / (np.mean(m * m) - m.mean() ** 2)
    assert pf.beta(p, m) == pytest.approx(printed, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 20), st.floats(-5, 5), st.floats(-5, 5))
def test_beta_linear_in_portfolio(seed, a, b):
    rng = np.random.default_rng(seed)
    m, p, q = rng.normal(size=(3, 100))
    lhs = pf.beta(a * p + b * q, m)
    assert lhs == pytest.approx(a * pf.beta(p, m) + b * pf.beta(q, m), abs=1e-9)


def test_beta_errors():
    with pytest.raises(DataError):
        pf.beta([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(DataError):
        pf.beta([1.0, 2.0, 3.0], [1.0, 1.0, 1.0])


def test_portfolio_invariants():
    pf.Portfolio(("a", "b"), [0.25, 0.75])
    with pytest.raises(DataError):
        pf.Portfolio(("a", "b"), [0.5, 0.6])
    with pytest.raises(DataError):
        pf.Portfolio(("a",), [float("nan")])


# ---------------------------------------------------------------- signal

def test_signal_conditional_count():
    table = WordTable(3, True, {"uuu": 9, "uud": 1}, 10)
    sig = pf.zipf_signal(table, "uu", margin=0.1)
    assert sig.action == "buy" and sig.confidence == pytest.approx(0.8)


def test_signal_balanced_and_unseen():
    table = count_words("uudduudd", 2)
    assert pf.zipf_signal(table, "u").action == "hold"
    sig = pf.zipf_signal(count_words("uuuu", 2), "d")
    assert sig.action == "hold" and sig.confidence == 0.0


def test_signal_sell_and_prefix_length():
    table = count_words("ududud", 2)
    assert pf.zipf_signal(table, "u").action == "sell"
    with pytest.raises(DataError):
        pf.zipf_signal(table, "ud")


# ---------------------------------------------------------------- backtest

def test_alternating_fixture_strictly_increasing():
    # hand simulation: the table learns u -> d and d -> u, so at each step the
    # strategy holds whichever asset is about to rise by 10%
    res = pf.backtest(antiphase_pair(), pf.BacktestConfig(word_length=2),
                      train=(0, 20), trade=(20, 41))
    eq = res.equity.values
    assert np.all(np.diff(eq) > 0)
    np.testing.assert_allclose(eq, 1.1 ** np.arange(21), rtol=1e-12)
    assert res.report.yearly_return > 0
    assert res.report.reconciliation_error < 1e-10


def test_single_alternating_asset_sharpe_positive():
    s = TimeSeries.from_values(alternating(60) * (1 + 0.001 * np.arange(60)), "A")
    res = pf.backtest(s, pf.BacktestConfig(word_length=2), train=(0, 30), trade=(30, 60))
    assert np.all(np.diff(res.equity.values) >= 0)
    assert res.report.sharpe > 0


def test_coin_flip_null():
    excess = np.array([pf.backtest(coin_flip_prices(s), train=(0, 500), trade=(500, 1000))
                       .report.excess_return for s in range(100)])
    t = excess.mean() / (excess.std(ddof=1) / np.sqrt(excess.size))
    assert abs(t) < 3


@pytest.mark.parametrize("weighting", ["equal", "confidence"])
@pytest.mark.parametrize("seed", range(5))
def test_accounting_reconciles(weighting, seed):
    res = pf.backtest(coin_flip_prices(seed, 600), pf.BacktestConfig(weighting=weighting),
                      train=(0, 300), trade=(300, 600))
    assert res.report.reconciliation_error < 1e-10
    np.testing.assert_allclose(res.weights.sum(axis=1)[res.weights.sum(axis=1) > 0], 1.0,
                               rtol=1e-12)
    assert np.all(res.weights >= 0)


def test_all_hold_is_flat():
    # a margin of 1 can never be exceeded, so every signal is hold
    res = pf.backtest(coin_flip_prices(3, 400), pf.BacktestConfig(margin=1.0),
                      train=(0, 200), trade=(200, 400))
    assert np.all(res.equity.values == 1.0)
    assert res.report.yearly_return == 0.0 and res.report.beta == 0.0
    assert res.report.trade_count == 0 and res.report.sharpe is None


def test_no_lookahead_table_hash():
    prices = coin_flip_prices(4, 600)
    base = pf.backtest(prices, train=(0, 300), trade=(300, 600))
    shocked = {k: TimeSeries(v.timestamps, np.concatenate([v.values[:300], v.values[300:] * 1.7
                                                           + np.arange(300)]), k)
               for k, v in prices.items()}
    again = pf.backtest(shocked, train=(0, 300), trade=(300, 600))
    assert again.table_digests == base.table_digests


def test_decisions_ignore_future_prices():
    prices = coin_flip_prices(5, 600)
    base = pf.backtest(prices, train=(0, 300), trade=(300, 600))
    cut = {k: TimeSeries(v.timestamps[:450], v.values[:450], k) for k, v in prices.items()}
    short = pf.backtest(cut, train=(0, 300), trade=(300, 450))
    np.testing.assert_array_equal(short.weights, base.weights[:149])


def test_price_scaling_invariance():
    prices = coin_flip_prices(6, 500)
    doubled = {k: TimeSeries(v.timestamps, 2 * v.values, k) for k, v in prices.items()}
    a = pf.backtest(prices, pf.BacktestConfig(alphabet_size=3), train=(0, 250), trade=(250, 500))
    b = pf.backtest(doubled, pf.BacktestConfig(alphabet_size=3), train=(0, 250), trade=(250, 500))
    np.testing.assert_allclose(b.step_returns, a.step_returns, rtol=1e-12, atol=1e-15)
    assert (a.actions == b.actions).all()
    assert b.report.sharpe == pytest.approx(a.report.sharpe, rel=1e-9)
    assert b.report.beta == pytest.approx(a.report.beta, rel=1e-9)


def test_refresh_with_lag_learns_new_regime():
    # train on noise, then trade an alternating regime: only a refreshed
    # table can pick up the alternation
    noise = 100 * np.cumprod(1 + 0.01 * np.random.default_rng(0).choice([-1, 1], 200))
    alt = noise[-1] * alternating(401)[1:] / 100
    s = TimeSeries.from_values(np.concatenate([noise, alt]), "A")
    frozen = pf.backtest(s, pf.BacktestConfig(word_length=2), train=(0, 200), trade=(200, 600))
    fresh = pf.backtest(s, pf.BacktestConfig(word_length=2, refresh_lag=1),
                        train=(0, 200), trade=(200, 600))
    assert fresh.report.final_equity > frozen.report.final_equity
    assert fresh.report.final_equity > 1e3


def test_market_series_and_report_fields():
    prices = coin_flip_prices(7, 400)
    mkt = prices["x0"]
    res = pf.backtest(prices, train=(0, 200), trade=(200, 400), market=mkt)
    d = res.report.as_dict()
    assert d["period"] == (200, 399)
    assert d["variance"] >= 0
    np.testing.assert_allclose(res.market_returns, mkt.values[201:] / mkt.values[200:-1] - 1)


def test_backtest_errors():
    prices = coin_flip_prices(8, 300)
    with pytest.raises(DataError, match="overlap"):
        pf.backtest(prices, train=(0, 200), trade=(150, 300))
    with pytest.raises(DataError):
        pf.backtest(prices, pf.BacktestConfig(weighting="kelly"))
    with pytest.raises(DataError):
        pf.backtest({}, train=(0, 10), trade=(10, 20))
    bad = dict(prices)
    bad["y"] = TimeSeries.from_values(np.ones(300) * 5, "y", start=1)
    with pytest.raises(DataError):
        pf.backtest(bad, train=(0, 150), trade=(150, 300))
