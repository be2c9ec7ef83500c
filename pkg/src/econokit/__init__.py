"""Econophysics toolkit.

Modules:
    series: time-series ingestion, returns and windows.
    dfa: detrended fluctuation analysis and Hurst exponents.
    lppl: log-periodic divergence fits and crash-risk tracking.
    zipf: alphabet coding of returns and rank-frequency laws.
    portfolio: risk metrics and the word-statistics backtester.
    distance: correlation and entropy distances, MST hierarchies.
    wealth: kinetic money exchange with savings and taxes.
    cli: the ``econokit`` command.
"""

__version__ = "0.1.0"

from .exceptions import DataError, DegenerateError, EconokitError  # noqa: E402
from .series import ReturnSeries, TimeSeries, load_csv, load_wide_csv, returns  # noqa: E402

__all__ = [
    "__version__", "DataError", "DegenerateError", "EconokitError", "ReturnSeries",
    "TimeSeries", "load_csv", "load_wide_csv", "returns",
]
