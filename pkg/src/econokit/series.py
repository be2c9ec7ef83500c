"""Time series ingestion, validation, returns and windowing.

Time is an integer index everywhere in the package. Calendar dates are
parsed once at ingestion (as day offsets from the first row) and kept only
as labels.
"""

from __future__ import annotations

import csv
import datetime as _dt
import os
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from ._validation import as_1d_float
from .exceptions import DataError

GAP_POLICIES = ("reject", "forward-fill", "ignore")
RETURN_KINDS = ("simple", "log", "raw-difference")


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Timestamped real-valued observations.

    Attributes:
        timestamps: Strictly increasing integer time indices.
        values: Finite observations, one per timestamp.
        label: Free-form identifier.
        dates: Optional ISO date strings aligned with ``timestamps``.
    """

    timestamps: np.ndarray
    values: np.ndarray
    label: str = ""
    dates: Optional[tuple] = None

    def __post_init__(self):
        values = as_1d_float(self.values, "values", min_length=2)
        ts = np.asarray(self.timestamps)
        if ts.ndim != 1 or ts.size != values.size:
            raise DataError("timestamps and values must be 1-D and of equal length")
        if not np.issubdtype(ts.dtype, np.integer):
            if not np.all(np.equal(np.mod(ts, 1), 0)):
                raise DataError("timestamps must be integer indices")
        ts = ts.astype(np.int64)
        if np.any(np.diff(ts) <= 0):
            raise DataError("non-monotone timestamps")
        if self.dates is not None and len(self.dates) != values.size:
            raise DataError("dates must align with values")
        object.__setattr__(self, "timestamps", _frozen(ts, np.int64))
        object.__setattr__(self, "values", _frozen(values, np.float64))
        if self.dates is not None:
            object.__setattr__(self, "dates", tuple(self.dates))

    @classmethod
    def from_values(cls, values, label="", start=0):
        """Build a series on the consecutive index ``start, start + 1, ...``."""
        values = np.asarray(values, dtype=np.float64)
        return cls(np.arange(start, start + values.size), values, label)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values)
            and self.label == other.label
        )

    __hash__ = None

    def index_of(self, key):
        """Position of a timestamp or ISO date within the series.

        Falls back to the first position at or after ``key`` when the exact
        timestamp is absent.
        """
        if isinstance(key, str) and self.dates is not None and not _is_int(key):
            d = _dt.date.fromisoformat(key)
            origin = _dt.date.fromisoformat(self.dates[0])
            key = int(self.timestamps[0]) + (d - origin).days
        pos = int(np.searchsorted(self.timestamps, int(key), side="left"))
        return pos


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    """Per-step transform of a :class:`TimeSeries`.

    ``values[i]`` relates ``x[i + 1]`` to ``x[i]``.
    """

    values: np.ndarray
    kind: str = "simple"
    timestamps: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in RETURN_KINDS:
            raise DataError(f"unknown return kind {self.kind!r}")
        object.__setattr__(self, "values", _frozen(as_1d_float(self.values, "returns"), np.float64))
        if self.timestamps is not None:
            object.__setattr__(self, "timestamps", _frozen(self.timestamps, np.int64))

    def __len__(self):
        return self.values.size

    @property
    def mean(self):
        return float(self.values.mean())

    @property
    def variance(self):
        # population moment, matching the risk metrics
        return float(self.values.var())


def returns(series: TimeSeries, kind: str = "simple") -> ReturnSeries:
    """Per-step returns of ``series``.

    Args:
        series: Source series, length >= 2.
        kind: ``"simple"`` (x1/x0 - 1), ``"log"`` (ln x1/x0) or
            ``"raw-difference"`` (x1 - x0).
    """
    x = series.values if isinstance(series, TimeSeries) else as_1d_float(series, min_length=2)
    if x.size < 2:
        raise DataError("returns need at least two observations")
    if kind == "simple":
        if np.any(x[:-1] == 0):
            raise DataError("simple returns undefined for zero-valued observations")
        r = x[1:] / x[:-1] - 1.0
    elif kind == "log":
        if np.any(x <= 0):
            raise DataError("log returns need strictly positive values")
        r = np.log(x[1:] / x[:-1])
    elif kind == "raw-difference":
        r = np.diff(x)
    else:
        raise DataError(f"unknown return kind {kind!r}")
    ts = series.timestamps[1:] if isinstance(series, TimeSeries) else None
    return ReturnSeries(r, kind, ts)


def _root_label(label):
    return label.split("@", 1)[0]


def window(series: TimeSeries, start: int, length: int) -> TimeSeries:
    """Contiguous sub-series of ``length`` points starting at position ``start``."""
    n = len(series)
    if start < 0 or length < 2 or start + length > n:
        raise DataError(f"window [{start}, {start + length}) out of range for length {n}")
    stop = start + length
    ts = series.timestamps[start:stop]
    label = f"{_root_label(series.label)}@{ts[0]}..{ts[-1]}"
    dates = series.dates[start:stop] if series.dates is not None else None
    return TimeSeries(ts, series.values[start:stop], label, dates)


def rolling_windows(series: TimeSeries, length: int, step: int = 1) -> Iterator[TimeSeries]:
    """Yield successive windows; ``N - length + 1`` of them when ``step == 1``."""
    if step < 1:
        raise DataError("step must be >= 1")
    n = len(series)
    if length > n:
        raise DataError(f"window length {length} exceeds series length {n}")
    for start in range(0, n - length + 1, step):
        yield window(series, start, length)


def _is_int(text):
    try:
        int(text)
    except ValueError:
        return False
    return True


def _parse_time(text, row):
    text = text.strip()
    if _is_int(text):
        return int(text), None
    try:
        return None, _dt.date.fromisoformat(text[:10])
    except ValueError:
        raise DataError(f"row {row}: cannot parse time value {text!r}") from None


def _column_index(header, spec, default):
    if spec is None:
        return default
    if isinstance(spec, int):
        return spec
    if spec in header:
        return header.index(spec)
    if _is_int(spec):
        return int(spec)
    raise DataError(f"column {spec!r} not found in header {header}")


def read_table(path, delimiter=","):
    """Read a headed CSV file into ``(header, rows)``."""
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    return header, rows


def load_csv(path, time_column=None, value_column=None, gap_policy="reject",
             delimiter=",", label=None) -> TimeSeries:
    """Load one series from a CSV file with a header row.

    Args:
        path: CSV file.
        time_column: Header name or position of the time column (default 0).
            Times are plain integers or ISO-8601 dates.
        value_column: Header name or position of the value column (default 1).
        gap_policy: ``"reject"`` raises on missing values or skipped
            time steps; ``"forward-fill"`` fills both by repeating the last
            value; ``"ignore"`` drops missing values and keeps irregular
            timestamps.
        delimiter: Field separator.
        label: Series label (defaults to the value column name).

    Raises:
        DataError: on malformed rows (with row number), empty series or
            non-monotone timestamps.
    """
    if gap_policy not in GAP_POLICIES:
        raise DataError(f"unknown gap policy {gap_policy!r}")
    header, rows = read_table(path, delimiter)
    tcol = _column_index(header, time_column, 0)
    vcol = _column_index(header, value_column, 1)
    if max(tcol, vcol) >= len(header):
        raise DataError(f"{path}: column index out of range")
    times, values, is_date = [], [], None
    for lineno, row in enumerate(rows, start=2):
        if len(row) <= max(tcol, vcol):
            raise DataError(f"row {lineno}: expected at least {max(tcol, vcol) + 1} fields")
        t_int, t_date = _parse_time(row[tcol], lineno)
        row_is_date = t_date is not None
        if is_date is None:
            is_date = row_is_date
        elif is_date != row_is_date:
            raise DataError(f"row {lineno}: mixed integer and date timestamps")
        raw = row[vcol].strip()
        if raw == "" or raw.lower() in ("na", "nan", "null"):
            value = np.nan
        else:
            try:
                value = float(raw)
            except ValueError:
                raise DataError(f"row {lineno}: cannot parse value {raw!r}") from None
        if np.isinf(value):
            raise DataError(f"row {lineno}: non-finite value")
        times.append(t_date if is_date else t_int)
        values.append(value)
    if not values:
        raise DataError(f"{path}: empty series")

    if is_date:
        origin = times[0]
        ts = np.array([(d - origin).days for d in times], dtype=np.int64)
    else:
        ts = np.array(times, dtype=np.int64)
    vals = np.array(values, dtype=np.float64)
    if np.any(np.diff(ts) <= 0):
        raise DataError("non-monotone timestamps")

    missing = np.isnan(vals)
    gaps = np.diff(ts) > 1
    if gap_policy == "reject":
        if missing.any():
            raise DataError(f"missing value at row {int(np.argmax(missing)) + 2}")
        if gaps.any():
            raise DataError(f"time gap after row {int(np.argmax(gaps)) + 2}")
    elif gap_policy == "ignore":
        ts, vals = ts[~missing], vals[~missing]
    else:
        if missing[0]:
            raise DataError("cannot forward-fill a missing first value")
        full = np.arange(ts[0], ts[-1] + 1)
        pos = np.searchsorted(ts, full, side="right") - 1
        vals = _ffill(vals)[pos]
        ts = full
    if vals.size < 2:
        raise DataError(f"{path}: series needs at least two observations")
    dates = None
    if is_date:
        dates = tuple((origin + _dt.timedelta(days=int(d))).isoformat() for d in ts)
    name = label if label is not None else header[vcol]
    return TimeSeries(ts, vals, name, dates)


def _ffill(vals):
    out = vals.copy()
    for i in range(1, out.size):
        if np.isnan(out[i]):
            out[i] = out[i - 1]
    return out


def load_wide_csv(path, time_column=None, value_columns: Optional[Sequence[str]] = None,
                  gap_policy="reject", delimiter=","):
    """Load every value column of a wide CSV as a dict ``label -> TimeSeries``."""
    header, _ = read_table(path, delimiter)
    tcol = _column_index(header, time_column, 0)
    names = value_columns or [h for i, h in enumerate(header) if i != tcol]
    return {
        name: load_csv(path, tcol, name, gap_policy, delimiter, label=name)
        for name in names
    }


def write_csv(series: TimeSeries, path, delimiter=","):
    """Write ``series`` so that :func:`load_csv` reproduces it bit-exactly."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(["t", series.label or "v"])
        times = series.dates if series.dates is not None else series.timestamps
        for t, v in zip(times, series.values):
            w.writerow([t, repr(float(v))])
