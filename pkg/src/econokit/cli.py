"""Command-line entry point: ``econokit <subcommand> [options]``.

Every subcommand reads its parameters from (lowest to highest priority)
built-in defaults, a ``--config`` file of ``key = value`` lines, ``ECONOKIT_*``
environment variables and command-line flags. The merged configuration is
echoed in the JSON report, and ``econokit replay report.json`` re-runs it.

Exit codes: 0 success, 1 data error, 2 usage error, 70 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import dfa as _dfa
from . import distance as _distance
from . import lppl as _lppl
from . import portfolio as _portfolio
from . import wealth as _wealth
from . import zipf as _zipf
from .exceptions import DataError, EconokitError
from .series import GAP_POLICIES, TimeSeries, load_csv, load_wide_csv, returns

log = logging.getLogger("econokit")

EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 70
ENV_PREFIX = "ECONOKIT_"
REPORT_NAME = "report.json"


class UsageError(Exception):
    """Bad invocation: unknown key, malformed config, missing parameter."""


# --------------------------------------------------------------------------- converters
# Each converter accepts the raw string from a flag, file or environment
# variable, or the JSON value found in a report, and returns a JSON-native value.

def _to_str(v):
    return str(v)


def _to_int(v):
    if isinstance(v, bool):
        raise ValueError("expected an integer")
    if isinstance(v, (int, np.integer)):
        return int(v)
    f = float(v)
    if not f.is_integer():
        raise ValueError(f"expected an integer, got {v!r}")
    return int(f)


def _to_float(v):
    if isinstance(v, bool):
        raise ValueError("expected a number")
    return float(v)


def _to_bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _list_of(conv):
    def convert(v):
        items = v if isinstance(v, (list, tuple)) else [s for s in str(v).split(",")]
        out = [conv(s.strip() if isinstance(s, str) else s) for s in items]
        if isinstance(v, str) and any(isinstance(s, str) and not s for s in out):
            raise ValueError("empty list item")
        return out
    return convert


def _to_pair(v):
    """``"a:b"`` (or a two-item list) to ``[a, b]``; items stay strings unless integer."""
    parts = list(v) if isinstance(v, (list, tuple)) else str(v).split(":")
    if len(parts) != 2:
        raise ValueError(f"expected start:stop, got {v!r}")
    out = []
    for p in parts:
        p = p.strip() if isinstance(p, str) else p
        try:
            out.append(_to_int(p))
        except ValueError:
            out.append(str(p))
    return out


def _to_grid(v):
    """``"start:stop:num"`` or a comma list; kept as text, expanded by :func:`_grid`."""
    s = str(v).strip()
    _grid(s)
    return s


def _grid(spec):
    if spec is None:
        return None
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must be start:stop:num, got {spec!r}")
        return np.linspace(float(parts[0]), float(parts[1]), _to_int(parts[2]))
    return np.array([float(s) for s in spec.split(",")])


def _optional(conv):
    def convert(v):
        if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none", "null")):
            return None
        return conv(v)
    return convert


@dataclass(frozen=True)
class Param:
    name: str
    convert: Callable[[Any], Any]
    default: Any = None
    help: str = ""
    choices: Optional[tuple] = None
    required: bool = False
    kind: str = "value"            # value | bool | multi
    echo: bool = True

    @property
    def flag(self):
        return "--" + self.name.replace("_", "-")

    def coerce(self, raw):
        try:
            value = self.convert(raw)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid value for {self.name}: {exc}") from None
        if self.choices is not None and value is not None and value not in self.choices:
            raise UsageError(f"{self.name} must be one of {list(self.choices)}, got {value!r}")
        return value


_SERIES = [
    Param("time_column", _optional(_to_str), None, "time column name or position"),
    Param("value_column", _optional(_to_str), None, "value column name or position"),
    Param("gap_policy", _to_str, "reject", "missing data handling", GAP_POLICIES),
]
_COMMON = [
    Param("threads", _to_int, 1, "cap on worker threads (BLAS pools)"),
    Param("out", _to_str, "econokit-out", "output directory", echo=False),
]


def _input(multi=False):
    if multi:
        return Param("input", _list_of(_to_str), None, "CSV file(s)", required=True, kind="multi")
    return Param("input", _to_str, None, "CSV file", required=True)


PARAMS = {
    "dfa": [
        _input(), *_SERIES,
        Param("on", _to_str, "values", "signal analysed", ("values", "returns", "log-returns")),
        Param("degree", _to_int, 1, "detrending polynomial degree"),
        Param("box_sizes", _optional(_list_of(_to_int)), None, "explicit box sizes n1,n2,..."),
        Param("box_ratio", _to_float, 2 ** 0.25, "ratio between default box sizes"),
        Param("fit_range", _optional(_list_of(_to_int)), None, "box-size range lo,hi of the fit"),
        Param("rolling_window", _optional(_to_int), None, "rolling window length"),
        Param("rolling_step", _to_int, 1, "rolling window step"),
    ],
    "lppl": [
        _input(), *_SERIES,
        Param("transform", _to_str, "none", "applied to values before fitting", ("none", "log")),
        Param("form", _to_str, "log", "divergence shape", _lppl.FORMS),
        Param("oscillation", _to_str, "cos", "oscillation bracket", _lppl.OSCILLATIONS),
        Param("mode", _to_str, "both", "fits to run", ("split", "full", "both")),
        Param("tc_grid", _optional(_to_grid), None, "t_c grid start:stop:num or list"),
        Param("omega_grid", _optional(_to_grid), None, "omega grid start:stop:num or list"),
        Param("m_grid", _optional(_to_grid), None, "m' grid start:stop:num or list"),
        Param("track", _to_bool, False, "run the crash-risk track", kind="bool"),
        Param("track_policy", _to_str, "growing", "track windows", ("growing", "rolling")),
        Param("track_step", _to_int, 5, "points between track windows"),
        Param("track_k", _to_int, 5, "windows inspected by the convergence rule"),
        Param("threshold", _to_float, 5.0, "gap threshold for convergence"),
        Param("first_end", _optional(_to_int), None, "position of the first track window end"),
        Param("window_length", _optional(_to_int), None, "rolling track window length"),
    ],
    "zipf": [
        _input(), *_SERIES,
        Param("alphabet", _to_int, 2, "alphabet size", (2, 3, 5)),
        Param("thresholds", _optional(_list_of(_to_float)), None, "letter cuts"),
        Param("word_length", _to_int, 3, "letters per word"),
        Param("overlap", _to_bool, True, "count overlapping words", kind="bool"),
        Param("returns", _to_str, "simple", "return kind coded", ("simple", "log")),
    ],
    "backtest": [
        _input(multi=True), *_SERIES,
        Param("train", _optional(_to_pair), None, "training window start:stop (positions or dates)"),
        Param("trade", _optional(_to_pair), None, "trading window start:stop (positions or dates)"),
        Param("word_length", _to_int, 3, "letters per word"),
        Param("alphabet", _to_int, 2, "alphabet size", (2, 3, 5)),
        Param("thresholds", _optional(_list_of(_to_float)), None, "letter cuts"),
        Param("weighting", _to_str, "equal", "capital split", _portfolio.WEIGHTINGS),
        Param("margin", _to_float, 0.0, "minimum |P(u) - P(d)| to act"),
        Param("refresh_lag", _optional(_to_int), None, "update tables with this lag"),
        Param("market", _optional(_to_str), None, "benchmark: series label or CSV file"),
        Param("periods_per_year", _to_int, _portfolio.PERIODS_PER_YEAR, "annualisation"),
    ],
    "distance": [
        _input(multi=True), *_SERIES,
        Param("kind", _to_str, "correlation", "distance", _distance.KINDS),
        Param("window", _optional(_to_int), None, "rolling window length (levels)"),
        Param("step", _to_int, 1, "rolling window step"),
        Param("subset", _optional(_list_of(_to_str)), None, "labels for the track", kind="multi"),
        Param("mst", _to_bool, False, "build the minimum spanning tree", kind="bool"),
        Param("m", _to_int, 2, "block length of the entropy rate"),
    ],
    "wealthsim": [
        Param("agents", _to_int, 500, "number of agents"),
        Param("steps", _to_int, 1_000_000, "pairwise exchanges"),
        Param("total_money", _optional(_to_float), None, "total money (default: one per agent)"),
        Param("savings", _to_str, "none", "none, fixed:<s> or uniform"),
        Param("tax", _to_float, 0.0, "fraction of each pool removed"),
        Param("seed", _to_int, 0, "random seed"),
        Param("snapshots", _to_int, 10, "equally spaced snapshots"),
        Param("bins", _to_int, 50, "histogram bins"),
        Param("tail_fraction", _to_float, 0.1, "tail share used by the exponent fit"),
    ],
}
for _table in PARAMS.values():
    _table.extend(_COMMON)
SUBCOMMANDS = tuple(PARAMS)


# --------------------------------------------------------------------------- config merge

def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment. Returns ``{key: (value, line)}``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"{path}:{lineno}: empty key")
        if key in out:
            raise UsageError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = (value, lineno)
    return out


def _normalise_key(key):
    return key.strip().lower().replace("-", "_")


def resolve_config(subcommand, flags, config_path=None, environ=None):
    """Merge defaults, config file, environment and flags.

    Returns ``(config, warnings)``. A flag that overrides a different value
    from the file or environment wins and records a warning.
    """
    table = {p.name: p for p in PARAMS[subcommand]}
    values = {name: p.default for name, p in table.items()}
    origin = {name: "default" for name in table}
    warnings = []
    if config_path is not None:
        for key, (raw, lineno) in read_config(config_path).items():
            name = _normalise_key(key)
            if name not in table:
                raise UsageError(f"{config_path}:{lineno}: unknown config key {key!r} "
                                 f"for {subcommand}")
            values[name], origin[name] = table[name].coerce(raw), "config file"
    for var, raw in sorted((environ if environ is not None else os.environ).items()):
        if not var.startswith(ENV_PREFIX):
            continue
        name = _normalise_key(var[len(ENV_PREFIX):])
        if name not in table:
            warnings.append(f"environment variable {var} ignored: not a {subcommand} parameter")
            continue
        new = table[name].coerce(raw)
        if origin[name] == "config file" and new != values[name]:
            warnings.append(f"{name}: environment value {new!r} overrides config file "
                            f"value {values[name]!r}")
        values[name], origin[name] = new, "environment"
    for name, raw in flags.items():
        new = table[name].coerce(raw)
        if origin[name] != "default" and new != values[name]:
            warnings.append(f"{name}: flag value {new!r} overrides {origin[name]} "
                            f"value {values[name]!r}")
        values[name], origin[name] = new, "flag"
    missing = [n for n, p in table.items() if p.required and values[n] is None]
    if missing:
        raise UsageError(f"missing required parameter(s): {', '.join(missing)}")
    if values["threads"] < 1:
        raise UsageError("threads must be at least 1")
    for key in ("input", "market"):
        if isinstance(values.get(key), str) and (key == "input" or os.path.exists(values[key])):
            values[key] = os.path.abspath(values[key])
        elif isinstance(values.get(key), list):
            values[key] = [os.path.abspath(p) for p in values[key]]
    return values, warnings


# --------------------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="econokit", description="Econophysics analysis toolkit.")
    parser.add_argument("--version", action="version", version=f"econokit {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    sub.required = True
    for name, table in PARAMS.items():
        p = sub.add_parser(name, help=f"run the {name} analysis")
        p.add_argument("--config", default=None, help="key = value configuration file")
        for prm in table:
            kw = {"default": argparse.SUPPRESS, "help": prm.help, "dest": prm.name}
            if prm.kind == "bool":
                p.add_argument(prm.flag, action=argparse.BooleanOptionalAction, **kw)
            elif prm.kind == "multi":
                p.add_argument(prm.flag, nargs="+", **kw)
            else:
                p.add_argument(prm.flag, **kw)
    rp = sub.add_parser("replay", help="re-run the configuration echoed in a report")
    rp.add_argument("report", help="report.json written by an earlier run")
    rp.add_argument("--out", default=None, help="output directory for the new report")
    return parser


# --------------------------------------------------------------------------- output

def _plain(obj):
    """Convert numpy and container types to JSON-native values; non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else None
    return obj


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_outputs(out_dir, files):
    """Write ``{name: text}`` into ``out_dir`` via temporary files and renames.

    Nothing is renamed into place until every file has been written, so a
    failure leaves no partial outputs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=out, prefix=".tmp-", suffix="-" + name)
            staged.append((tmp, out / name))
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            Path(tmp).unlink(missing_ok=True)
        raise
    # the report goes last so its presence marks a complete run
    staged.sort(key=lambda s: s[1].name == REPORT_NAME)
    for tmp, final in staged:
        os.replace(tmp, final)
    return [str(final) for _, final in staged]


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# --------------------------------------------------------------------------- inputs

def _load_one(cfg):
    return load_csv(cfg["input"], cfg["time_column"], cfg["value_column"], cfg["gap_policy"])


def _load_many(cfg):
    """One wide CSV, or one single-series CSV per label (label = file stem)."""
    paths = cfg["input"]
    if len(paths) == 1:
        cols = None if cfg["value_column"] is None else cfg["value_column"].split(",")
        return load_wide_csv(paths[0], cfg["time_column"], cols, cfg["gap_policy"])
    series = {}
    for p in paths:
        label = Path(p).stem
        if label in series:
            raise DataError(f"two input files share the label {label!r}")
        series[label] = load_csv(p, cfg["time_column"], cfg["value_column"],
                                 cfg["gap_policy"], label=label)
    return series


def _position(key, series: TimeSeries):
    if isinstance(key, int):
        return key
    if series.dates is None:
        raise DataError(f"window bound {key!r} is a date but the series has integer times")
    pos = int(np.searchsorted(np.array(series.dates), key))
    if pos > len(series):
        raise DataError(f"date {key!r} lies after the series end")
    return pos


# --------------------------------------------------------------------------- runners

def run_dfa(cfg):
    series = _load_one(cfg)
    if cfg["on"] == "values":
        x = series.values
    else:
        x = returns(series, "simple" if cfg["on"] == "returns" else "log").values
    sizes = cfg["box_sizes"]
    if sizes is None:
        sizes = _dfa.default_box_sizes(x.size, cfg["degree"], cfg["box_ratio"])
    curve = _dfa.dfa_curve(x, sizes, cfg["degree"])
    fit_range = None if cfg["fit_range"] is None else tuple(cfg["fit_range"])
    if fit_range is not None and len(fit_range) != 2:
        raise DataError("fit_range needs two box sizes lo,hi")
    est = _dfa.hurst_exponent(curve, fit_range)
    cls = _dfa.classify(est.alpha, est.stderr)
    results = {
        "alpha": est.alpha, "stderr": est.stderr, "r_squared": est.r_squared,
        "intercept": est.intercept, "fit_range": est.fit_range, "n_points": est.n_points,
        "spectral_exponent": _dfa.spectral_exponent(est.alpha),
        "increment_correlation": _dfa.autocorr_from_alpha(est.alpha),
        "persistence": cls.label, "band": cls.band, "n_samples": int(x.size),
        "curve": {"n": curve.box_sizes, "f": curve.f},
    }
    files = {"curve.csv": _csv_text(["n", "f"], zip(curve.box_sizes.tolist(), curve.f.tolist()))}
    warnings = []
    if cfg["rolling_window"] is not None:
        track = _dfa.rolling_alpha(x, cfg["rolling_window"], cfg["rolling_step"], cfg["degree"],
                                   fit_range)
        results["rolling"] = {"window_length": track.window_length,
                              "window_ends": track.window_ends, "alpha": track.alpha,
                              "stderr": track.stderr}
        warnings += track.diagnostics
        files["rolling.csv"] = _csv_text(["window_end", "alpha", "stderr"],
                                         zip(track.window_ends.tolist(), track.alpha.tolist(),
                                             track.stderr.tolist()))
    return results, files, warnings


def run_lppl(cfg):
    series = _load_one(cfg)
    y = series.values
    if cfg["transform"] == "log":
        if np.any(y <= 0):
            raise DataError("log transform needs positive values")
        y = np.log(y)
    data = TimeSeries(series.timestamps, y, series.label)
    fc = _lppl.FitConfig(form=cfg["form"], oscillation=cfg["oscillation"],
                         t_c_grid=_grid(cfg["tc_grid"]), omega_grid=_grid(cfg["omega_grid"]),
                         m_grid=_grid(cfg["m_grid"]))
    results, warnings = {}, []
    t = data.timestamps.astype(np.float64)
    columns, header = [t, y], ["t", "y"]
    if cfg["mode"] in ("full", "both"):
        params = _lppl.full_fit(data, fc)
        results["full"] = params.as_dict()
        columns.append(_lppl.evaluate(params, t))
        header.append("full_fit")
    if cfg["mode"] in ("split", "both"):
        split = _lppl.split_fit(data, fc)
        results["split"] = split.as_dict()
        if split.low_confidence:
            warnings.append("split fit is low confidence: " + "; ".join(split.reasons))
        columns.append(split.divergence.predict(t))
        header.append("split_divergence")
    if cfg["track"]:
        track = _lppl.crash_risk_track(data, cfg["track_policy"], cfg["track_step"],
                                       cfg["first_end"], cfg["window_length"], fc,
                                       cfg["track_k"], cfg["threshold"])
        results["track"] = track.as_dict()
    files = {"fit.csv": _csv_text(header, zip(*[c.tolist() for c in columns]))}
    if cfg["track"]:
        files["track.csv"] = _csv_text(
            ["window_end", "t_c_div", "t_c_osc", "gap", "low_confidence", "converged"],
            [(e.window_end, e.t_c_div, e.t_c_osc, e.gap, e.low_confidence, bool(f))
             for e, f in zip(track.entries, track.flag_history)])
    return results, files, warnings


def run_zipf(cfg):
    series = _load_one(cfg)
    r = returns(series, cfg["returns"]).values
    if cfg["thresholds"] is None:
        alphabet = _zipf.Alphabet.from_returns(cfg["alphabet"], r)
    else:
        alphabet = _zipf.Alphabet(cfg["alphabet"], tuple(cfg["thresholds"]))
    letters = _zipf.encode(r, alphabet)
    table = _zipf.count_words(letters, cfg["word_length"], cfg["overlap"])
    ranked = _zipf.rank_frequency(table)
    results = {
        "alphabet": {"size": alphabet.size, "thresholds": alphabet.thresholds},
        "table": {"word_length": table.word_length, "overlapping": table.overlapping,
                  "total": table.total, "distinct": len(table.counts),
                  "sequence_length": table.sequence_length, "digest": table.digest(),
                  "top": [[w, int(c)] for w, c in zip(ranked.words[:20], ranked.counts[:20])]},
        "zipf": None, "pareto": None, "relation_residual": None,
    }
    warnings = []
    try:
        zf = _zipf.fit_zipf(ranked)
        results["zipf"] = {"zeta": zf.zeta, "stderr": zf.stderr, "rank_range": zf.rank_range,
                           "r_squared": zf.r_squared, "n_points": zf.n_points}
    except DataError as exc:
        warnings.append(f"zipf fit skipped: {exc}")
    try:
        pf = _zipf.fit_pareto(ranked.counts)
        results["pareto"] = {"lambda": pf.lam, "stderr": pf.stderr, "r_squared": pf.r_squared,
                             "tail_fraction": pf.tail_fraction, "n_points": pf.n_points}
    except DataError as exc:
        warnings.append(f"pareto fit skipped: {exc}")
    if results["zipf"] and results["pareto"]:
        results["relation_residual"] = _zipf.exponent_relation_residual(zf.zeta, pf.lam)
    rows = [(k, w, int(c)) for k, (w, c) in enumerate(zip(ranked.words, ranked.counts), 1)]
    return results, {"rank_frequency.csv": _csv_text(["rank", "word", "count"], rows)}, warnings


def run_backtest(cfg):
    series = _load_many(cfg)
    market = None
    if cfg["market"] is not None:
        if cfg["market"] in series:
            market = series.pop(cfg["market"])
        elif os.path.exists(cfg["market"]):
            market = load_csv(cfg["market"], cfg["time_column"], cfg["value_column"],
                              cfg["gap_policy"])
        else:
            raise DataError(f"market {cfg['market']!r} is neither a label nor a file")
    first = next(iter(series.values()))
    n = len(first)
    train = (0, n // 2) if cfg["train"] is None else tuple(_position(k, first) for k in cfg["train"])
    trade = (train[1], n) if cfg["trade"] is None else tuple(_position(k, first) for k in cfg["trade"])
    bc = _portfolio.BacktestConfig(
        word_length=cfg["word_length"], alphabet_size=cfg["alphabet"],
        thresholds=None if cfg["thresholds"] is None else tuple(cfg["thresholds"]),
        weighting=cfg["weighting"], margin=cfg["margin"], refresh_lag=cfg["refresh_lag"],
        periods_per_year=cfg["periods_per_year"])
    res = _portfolio.backtest(series, bc, train, trade, market)
    results = {"report": res.report.as_dict(), "labels": res.labels, "train": train,
               "trade": trade, "table_digests": dict(res.table_digests)}
    warnings = []
    if res.report.sharpe is None:
        warnings.append("portfolio variance is zero: Sharpe ratio undefined")
    eq = res.equity
    files = {"equity.csv": _csv_text(["t", "equity"],
                                     zip(eq.timestamps.tolist(), eq.values.tolist()))}
    return results, files, warnings


def run_distance(cfg):
    series = _load_many(cfg)
    matrix = _distance.distance_matrix(series, cfg["kind"], m=cfg["m"])
    results = {"kind": cfg["kind"], "labels": matrix.labels, "matrix": matrix.d}
    files = {"matrix.csv": _csv_text(["label", *matrix.labels],
                                     [(lab, *row) for lab, row in zip(matrix.labels,
                                                                      matrix.d.tolist())])}
    if cfg["window"] is not None:
        track = _distance.rolling_mean_distance(series, cfg["window"], cfg["step"], cfg["kind"],
                                                cfg["subset"], cfg["m"])
        results["track"] = track.as_dict()
        files["track.csv"] = _csv_text(
            ["window_start", "window_end", "mean_distance"],
            zip(track.window_starts.tolist(), track.window_ends.tolist(),
                track.mean_distance.tolist()))
    if cfg["mst"]:
        tree = _distance.mst(matrix)
        results["mst"] = {"edges": [list(e) for e in tree.edge_labels()],
                          "total_weight": tree.total_weight, "linkage": tree.linkage}
        files["mst_edges.csv"] = _csv_text(["a", "b", "distance"], tree.edge_labels())
    return results, files, []


def run_wealthsim(cfg):
    total = float(cfg["agents"]) if cfg["total_money"] is None else cfg["total_money"]
    market = _wealth.init(cfg["agents"], total, cfg["savings"], cfg["tax"], cfg["seed"])
    start_total = market.total
    snaps = _wealth.run(market, cfg["steps"], cfg["snapshots"], cfg["bins"])
    final = snaps[-1]
    warnings, tail = [], None
    try:
        fit = _wealth.tail_exponent(final, cfg["tail_fraction"])
        tail = {"exponent": fit.exponent, "stderr": fit.stderr, "r_squared": fit.r_squared,
                "n_tail": fit.n_tail, "poor_fit": fit.poor_fit}
        if fit.poor_fit:
            warnings.append("tail is not a clean power law (R^2 below threshold)")
    except DataError as exc:
        warnings.append(f"tail fit skipped: {exc}")
    drift = abs(market.total + market.leaked - start_total) / start_total
    results = {
        "snapshots": [{"step": s.step, "gini": s.gini, "total": s.total} for s in snaps],
        "final": {"step": final.step, "gini": final.gini, "equilibrated": final.equilibrated,
                  "mean": float(final.holdings.mean()), "max": float(final.holdings[-1]),
                  "tail": tail},
        "conservation": {"initial_total": start_total, "final_total": market.total,
                         "leaked": market.leaked, "relative_drift": drift,
                         "conserved": bool(cfg["tax"] == 0 and drift < 1e-9)},
    }
    width = len(str(len(snaps)))
    files = {
        f"histogram_{k:0{width}d}.csv": _csv_text(
            ["bin_left", "bin_right", "count"],
            zip(s.hist_edges[:-1].tolist(), s.hist_edges[1:].tolist(), s.hist_counts.tolist()))
        for k, s in enumerate(snaps, 1)
    }
    return results, files, warnings


RUNNERS = {"dfa": run_dfa, "lppl": run_lppl, "zipf": run_zipf, "backtest": run_backtest,
           "distance": run_distance, "wealthsim": run_wealthsim}


def execute(subcommand, cfg, warnings=()):
    """Run one analysis and return ``(report, files)`` without touching the disk."""
    started = time.perf_counter()
    with threadpool_limits(limits=cfg["threads"]):
        results, files, run_warnings = RUNNERS[subcommand](cfg)
    inputs = {}
    for key in ("input", "market"):
        paths = cfg.get(key)
        for p in [paths] if isinstance(paths, str) else paths or []:
            if os.path.isfile(p):
                inputs[p] = _digest(p)
    report = {
        "tool": "econokit",
        "version": __version__,
        "subcommand": subcommand,
        "config": {p.name: cfg[p.name] for p in PARAMS[subcommand] if p.echo},
        "inputs": inputs,
        "results": _plain(results),
        "warnings": list(warnings) + list(run_warnings),
        "duration_seconds": time.perf_counter() - started,
    }
    return report, files


def report_json(report):
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _finish(report, files, out_dir):
    files = dict(files)
    files[REPORT_NAME] = report_json(report)
    write_outputs(out_dir, files)
    path = Path(out_dir) / REPORT_NAME
    print(path)
    for w in report["warnings"]:
        log.warning(w)
    return path


def _replay(path, out_dir):
    try:
        original = json.loads(Path(path).read_text())
        sub, echoed = original["subcommand"], original["config"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read report {path}: {exc}") from None
    if sub not in PARAMS:
        raise UsageError(f"report names an unknown subcommand {sub!r}")
    table = {p.name: p for p in PARAMS[sub]}
    unknown = sorted(set(echoed) - set(table))
    if unknown:
        raise UsageError(f"report config has unknown key(s): {', '.join(unknown)}")
    cfg = {name: p.default for name, p in table.items()}
    cfg.update({k: table[k].coerce(v) for k, v in echoed.items()})
    if out_dir is not None:
        cfg["out"] = out_dir
    warnings = []
    for p, digest in original.get("inputs", {}).items():
        if not os.path.isfile(p) or _digest(p) != digest:
            warnings.append(f"input {p} changed since the original run")
    report, files = execute(sub, cfg, warnings)
    identical = report["results"] == original.get("results")
    _finish(report, files, cfg["out"])
    if not identical:
        raise DataError("replayed results differ from the original report")
    return EXIT_OK


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="econokit: %(levelname)s: %(message)s")
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.subcommand == "replay":
            return _replay(ns.report, ns.out)
        flags = {k: v for k, v in vars(ns).items() if k not in ("subcommand", "config")}
        cfg, warnings = resolve_config(ns.subcommand, flags, ns.config)
        report, files = execute(ns.subcommand, cfg, warnings)
        _finish(report, files, cfg["out"])
        return EXIT_OK
    except SystemExit as exc:                 # --help and --version
        return int(exc.code or 0)
    except UsageError as exc:
        _error("usage", exc)
        return EXIT_USAGE
    except EconokitError as exc:
        _error("data", exc)
        return EXIT_DATA
    except Exception as exc:                  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        _error("internal", exc)
        return EXIT_INTERNAL


def _error(kind, exc):
    payload = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)
