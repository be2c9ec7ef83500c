"""Performance metrics and a backtester for the word-statistics strategy.

Every asset's returns are coded into letters, a word table is learned on a
training window, and during the trading window the table predicts whether
the next letter is more likely ``u`` or ``d``. Long-only: a buy signal
enters the asset, a sell signal moves it to cash, a hold keeps the current
state. Capital is spread over the held assets with equal or
confidence-proportional weights and rebalanced every step, without costs.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from ._validation import as_1d_float, check_scalar
from .exceptions import DataError
from .series import TimeSeries
from .zipf import Alphabet, WordTable, count_words, encode

PERIODS_PER_YEAR = 252
WEIGHTINGS = ("equal", "confidence")


# --------------------------------------------------------------------------- metrics

def sharpe_ratio(expected_return, stddev):
    """``E(r) / sigma``, with no risk-free rate."""
    check_scalar(expected_return, "expected_return")
    check_scalar(stddev, "stddev")
    if not stddev > 0:
        raise DataError("Sharpe ratio needs a positive standard deviation")
    return expected_return / stddev


def _cov(a, b):
    # population moments; a constant argument gives exactly zero
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return 0.0
    return float(np.mean((a - a.mean()) * (b - b.mean())))


def beta(portfolio_returns, market_returns):
    """``cov(r_P, r_M) / var(r_M)`` with population (1/N) moments."""
    p = as_1d_float(portfolio_returns, "portfolio_returns", min_length=2)
    m = as_1d_float(market_returns, "market_returns", min_length=2)
    if p.size != m.size:
        raise DataError(f"length mismatch: {p.size} portfolio vs {m.size} market returns")
    var_m = _cov(m, m)
    if var_m == 0.0:
        raise DataError("market variance is zero")
    return _cov(p, m) / var_m


@dataclass(frozen=True)
class Portfolio:
    """Asset weights; the weight on ``"cash"`` is implied as ``1 - sum``."""

    labels: tuple
    weights: np.ndarray
    rebalance: str = "per-signal"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(self.labels),):
            raise DataError("one weight per label is required")
        if np.any(np.isnan(w)):
            raise DataError("NaN weight")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DataError(f"weights sum to {w.sum()!r}, not 1")
        if self.rebalance not in ("buy-and-hold", "per-signal"):
            raise DataError(f"unknown rebalance policy {self.rebalance!r}")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "weights", w)


# --------------------------------------------------------------------------- signal

@dataclass(frozen=True)
class Signal:
    action: str
    confidence: float
    p_up: float = 0.0
    p_down: float = 0.0


def _next_letter_counts(counts: Mapping[str, int], prefix: str):
    k = len(prefix)
    up = down = total = 0
    for word, c in counts.items():
        if word[:k] == prefix:
            total += c
            if word[k] == "u":
                up += c
            elif word[k] == "d":
                down += c
    return up, down, total


def zipf_signal(table: WordTable, recent_word: str, margin: float = 0.0) -> Signal:
    """Buy, sell or hold from the conditional frequency of the next letter.

    ``P(u | prefix)`` and ``P(d | prefix)`` are read off the words that start
    with ``recent_word``. An unseen prefix holds with zero confidence.
    """
    if len(recent_word) != table.word_length - 1:
        raise DataError(f"prefix must have {table.word_length - 1} letters, "
                        f"got {len(recent_word)}")
    up, down, total = _next_letter_counts(table.counts, recent_word)
    return _decide(up, down, total, margin)


def _decide(up, down, total, margin):
    if total == 0:
        return Signal("hold", 0.0)
    pu, pd = up / total, down / total
    diff = pu - pd
    action = "buy" if diff > margin else "sell" if -diff > margin else "hold"
    return Signal(action, abs(diff), pu, pd)


# --------------------------------------------------------------------------- backtest

@dataclass(frozen=True)
class BacktestConfig:
    """Strategy settings.

    Attributes:
        word_length: Letters per word; the prefix is one shorter.
        alphabet_size: 2, 3 or 5.
        thresholds: Letter cuts; estimated from the training returns if None.
        overlapping: Word counting mode for the table.
        weighting: ``"equal"`` or ``"confidence"``.
        margin: Minimum ``|P(u) - P(d)|`` to act.
        refresh_lag: If set, words ending at least this many steps before the
            decision are added to the table as trading proceeds.
        periods_per_year: Annualisation factor.
        initial_capital: Starting equity, all in cash.
    """

    word_length: int = 3
    alphabet_size: int = 2
    thresholds: Optional[tuple] = None
    overlapping: bool = True
    weighting: str = "equal"
    margin: float = 0.0
    refresh_lag: Optional[int] = None
    periods_per_year: int = PERIODS_PER_YEAR
    initial_capital: float = 1.0

    def __post_init__(self):
        check_scalar(self.word_length, "word_length", low=2, integer=True)
        if self.weighting not in WEIGHTINGS:
            raise DataError(f"unknown weighting {self.weighting!r}")
        check_scalar(self.margin, "margin", low=0.0, high=1.0)
        if self.refresh_lag is not None:
            check_scalar(self.refresh_lag, "refresh_lag", low=0, integer=True)
        check_scalar(self.initial_capital, "initial_capital", low=0.0, low_open=True)


@dataclass(frozen=True)
class PerformanceReport:
    yearly_return: float
    variance: float
    sharpe: Optional[float]
    beta: Optional[float]
    market_yearly_return: float
    market_variance: float
    covariance: float
    excess_return: float
    period: tuple
    trade_count: int
    final_equity: float
    reconciliation_error: float

    def as_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class BacktestResult:
    report: PerformanceReport
    equity: TimeSeries
    step_returns: np.ndarray
    market_returns: np.ndarray
    weights: np.ndarray
    actions: np.ndarray
    labels: tuple
    table_digests: Mapping[str, str] = field(default_factory=dict)


def _aligned_prices(prices):
    if isinstance(prices, TimeSeries):
        prices = {prices.label or "asset": prices}
    if not prices:
        raise DataError("no price series given")
    labels = tuple(prices)
    first = prices[labels[0]]
    for lab in labels:
        s = prices[lab]
        if not np.array_equal(s.timestamps, first.timestamps):
            raise DataError(f"series {lab!r} is not aligned with {labels[0]!r}")
        if np.any(s.values <= 0):
            raise DataError(f"series {lab!r} has non-positive prices")
    P = np.column_stack([prices[lab].values for lab in labels])
    return labels, first.timestamps, P


def _check_split(train, trade, n):
    (a, b), (c, d) = train, trade
    if not (0 <= a < b <= n and 0 <= c < d <= n):
        raise DataError(f"windows {train} and {trade} do not fit {n} prices")
    if c < b:
        raise DataError("train and trade windows overlap (trade must start at or after train end)")
    return a, b, c, d


def backtest(prices, config: BacktestConfig = BacktestConfig(), train=None, trade=None,
             market=None) -> BacktestResult:
    """Run the word-statistics strategy over a trading window.

    Args:
        prices: Mapping label -> TimeSeries of prices on common timestamps,
            or a single TimeSeries.
        config: Strategy settings.
        train: ``(start, stop)`` price positions used to learn the tables.
        trade: ``(start, stop)`` price positions traded; a decision is made at
            every position ``t`` in ``[start, stop - 1)`` and earns the return
            from ``t`` to ``t + 1``.
        market: Benchmark price TimeSeries on the same timestamps; defaults to
            the equal-weight average of the asset returns.

    Windows are half-open and must not overlap. Only returns inside the
    training window build the tables; prefixes use the letters observed up
    to the decision time.
    """
    labels, ts, P = _aligned_prices(prices)
    n, k = P.shape
    if train is None or trade is None:
        half = n // 2
        train, trade = train or (0, half), trade or (half, n)
    a, b, c, d = _check_split(train, trade, n)
    m = config.word_length
    R = P[1:] / P[:-1] - 1.0                        # R[i] is the return from i to i + 1
    if b - a - 1 < m:
        raise DataError("training window too short for the word length")

    letters, tables, digests, seen = [], [], {}, []
    for j, lab in enumerate(labels):
        train_r = R[a:b - 1, j]
        if config.thresholds is None:
            alpha = Alphabet.from_returns(config.alphabet_size, train_r)
        else:
            alpha = Alphabet(config.alphabet_size, tuple(config.thresholds))
        seq = encode(R[:, j], alpha)
        table = count_words(seq[a:b - 1], m, config.overlapping)
        letters.append(seq)
        tables.append(Counter(table.counts))
        digests[lab] = table.digest()
        seen.append(b - 1)                          # next return index not yet in the table

    steps = d - 1 - c
    if steps < 1:
        raise DataError("trading window needs at least two prices")
    if c < m - 1:
        raise DataError("not enough history before the trading window for a prefix")
    weights = np.zeros((steps, k))
    actions = np.empty((steps, k), dtype=object)
    held = np.zeros(k, dtype=bool)
    conf = np.zeros(k)
    trades = 0
    for s, t in enumerate(range(c, d - 1)):
        for j in range(k):
            if config.refresh_lag is not None:
                # words made of returns R[..i] are known once t - lag >= i + 1
                limit = t - config.refresh_lag
                while seen[j] < limit:
                    i = seen[j]
                    if i - m + 1 >= 0:
                        tables[j][letters[j][i - m + 1:i + 1]] += 1
                    seen[j] += 1
            prefix = letters[j][t - m + 1:t]        # returns R[t-m+1 .. t-1], known at t
            sig = _decide(*_next_letter_counts(tables[j], prefix), config.margin)
            actions[s, j] = sig.action
            if sig.action == "buy":
                trades += not held[j]
                held[j] = True
                conf[j] = sig.confidence
            elif sig.action == "sell":
                trades += held[j]
                held[j] = False
        if held.any():
            w = np.where(held, 1.0, 0.0) if config.weighting == "equal" else np.where(held, conf, 0.0)
            weights[s] = w / w.sum()

    # share-based equity: shares bought at P[t], valued at P[t + 1]
    equity = np.empty(steps + 1)
    equity[0] = config.initial_capital
    for s, t in enumerate(range(c, d - 1)):
        shares = weights[s] * equity[s] / P[t]
        cash = equity[s] * (1.0 - weights[s].sum())
        equity[s + 1] = cash + float(shares @ P[t + 1])
    step_r = np.einsum("sj,sj->s", weights, R[c:d - 1])
    compounded = config.initial_capital * np.prod(1.0 + step_r)
    recon = abs(equity[-1] - compounded) / abs(compounded)

    if market is None:
        mkt_r = R[c:d - 1].mean(axis=1)
    else:
        if not np.array_equal(market.timestamps, ts):
            raise DataError("market series is not aligned with the prices")
        mv = market.values
        mkt_r = mv[c + 1:d] / mv[c:d - 1] - 1.0

    ppy = config.periods_per_year
    yr, var = float(step_r.mean() * ppy), float(_cov(step_r, step_r) * ppy)
    mvar = float(_cov(mkt_r, mkt_r) * ppy)
    report = PerformanceReport(
        yearly_return=yr,
        variance=var,
        sharpe=sharpe_ratio(yr, float(np.sqrt(var))) if var > 0 else None,
        beta=beta(step_r, mkt_r) if steps >= 2 and mvar > 0 else None,
        market_yearly_return=float(mkt_r.mean() * ppy),
        market_variance=mvar,
        covariance=float(_cov(step_r, mkt_r) * ppy),
        excess_return=float(np.mean(step_r - mkt_r)),
        period=(int(ts[c]), int(ts[d - 1])),
        trade_count=int(trades),
        final_equity=float(equity[-1]),
        reconciliation_error=float(recon),
    )
    curve = TimeSeries(ts[c:d], equity, "equity")
    return BacktestResult(report, curve, step_r, mkt_r, weights, actions, labels, digests)
