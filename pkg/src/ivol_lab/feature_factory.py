"""Technical-indicator feature generation and the movement target.

Twenty level/trend techniques are applied to the implied-volatility,
news-count, and page-view series (60 columns), RSI and its move variant
to those three plus the close (8 columns), and Williams %R plus the
stochastic oscillator to the close with its high/low range (2 columns).
Together with the eight original series this yields the 78-column
matrix; each column carries a source tag (market, option, news,
wikipedia) so ablation scenarios can mask whole sources.

All indicators are strictly trailing: the value at date t depends only
on observations at dates <= t. Warm-up rows and rows whose value is
undefined (zero denominators) are removed from the column's date index,
and the matrix keeps only dates present in every retained column.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data_ingest import DailySeries
from .errors import DataError, SchemaError

log = logging.getLogger(__name__)

ORIGINAL_SERIES = ("open", "high", "low", "close", "volume", "ivol", "news", "pageviews")

SOURCE_OF = {
    "open": "market",
    "high": "market",
    "low": "market",
    "close": "market",
    "volume": "market",
    "ivol": "option",
    "news": "news",
    "pageviews": "wikipedia",
}

ALL_SOURCES = frozenset({"market", "option", "news", "wikipedia"})

GROUP1_SERIES = ("ivol", "news", "pageviews")
GROUP2_SERIES = ("ivol", "news", "pageviews", "close")

GROUP1_TECHNIQUES: tuple[tuple[str, tuple[int, ...]], ...] = (
    ("ma", (3, 5, 10)),
    ("ma_move", (3, 5, 10)),
    ("ema", (3, 5, 10)),
    ("ema_move", (3, 5, 10)),
    ("roc", (5,)),
    ("roc_move", (5,)),
    ("disparity", (3, 5)),
    ("disparity_move", (3, 5)),
    ("momentum1", (5,)),
    ("momentum2", (5,)),
)


@dataclass(frozen=True)
class IndicatorSpec:
    technique: str
    n: int
    applied_to: str

    @property
    def column_name(self) -> str:
        return f"{self.technique}_{self.n}_{self.applied_to}"

    @property
    def source(self) -> str:
        return SOURCE_OF[self.applied_to]


def table_specs() -> tuple[IndicatorSpec, ...]:
    """All 70 generated columns in canonical order."""
    specs: list[IndicatorSpec] = []
    for series in GROUP1_SERIES:
        for technique, windows in GROUP1_TECHNIQUES:
            for n in windows:
                specs.append(IndicatorSpec(technique, n, series))
    for technique in ("rsi", "rsi_move"):
        for series in GROUP2_SERIES:
            specs.append(IndicatorSpec(technique, 14, series))
    specs.append(IndicatorSpec("williams_r", 14, "close"))
    specs.append(IndicatorSpec("stochastic_k", 14, "close"))
    return tuple(specs)


def _require(x: DailySeries, minimum: int, op: str) -> None:
    if len(x) < minimum:
        raise DataError(f"{op}: series {x.name!r} has {len(x)} points, needs {minimum}")


def _from_valid(dates: Sequence[date], values: np.ndarray, name: str) -> DailySeries:
    mask = np.isfinite(values)
    kept = tuple(d for d, ok in zip(dates, mask) if ok)
    return DailySeries(kept, values[mask], name)


def sma(x: DailySeries, n: int) -> DailySeries:
    """Trailing arithmetic mean over n observations."""
    if n < 1:
        raise ValueError("window must be >= 1")
    _require(x, n, "sma")
    out = np.full(len(x), np.nan)
    csum = np.concatenate(([0.0], np.cumsum(x.values)))
    out[n - 1:] = (csum[n:] - csum[:-n]) / n
    return _from_valid(x.dates, out, f"sma_{n}_{x.name}")


def ema(x: DailySeries, n: int) -> DailySeries:
    """Recursive exponential mean, alpha = 2/(n+1), seeded by the n-point SMA."""
    if n < 1:
        raise ValueError("window must be >= 1")
    _require(x, n, "ema")
    alpha = 2.0 / (n + 1)
    out = np.full(len(x), np.nan)
    level = float(np.mean(x.values[:n]))
    out[n - 1] = level
    for t in range(n, len(x)):
        level += alpha * (x.values[t] - level)
        out[t] = level
    return _from_valid(x.dates, out, f"ema_{n}_{x.name}")


def roc(x: DailySeries, n: int) -> DailySeries:
    """Percentage change over n observations; zero-base rows are excluded."""
    if n < 1:
        raise ValueError("window must be >= 1")
    _require(x, n + 1, "roc")
    out = np.full(len(x), np.nan)
    base = x.values[:-n]
    cur = x.values[n:]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[n:] = np.where(base != 0, 100.0 * (cur - base) / base, np.nan)
    if np.any(base == 0):
        log.warning("roc_%d_%s: %d rows excluded (zero base)", n, x.name,
                    int(np.sum(base == 0)))
    return _from_valid(x.dates, out, f"roc_{n}_{x.name}")


def disparity(x: DailySeries, n: int) -> DailySeries:
    """Price relative to its own n-day mean, in percent."""
    if n < 1:
        raise ValueError("window must be >= 1")
    _require(x, n, "disparity")
    out = np.full(len(x), np.nan)
    csum = np.concatenate(([0.0], np.cumsum(x.values)))
    means = (csum[n:] - csum[:-n]) / n
    with np.errstate(divide="ignore", invalid="ignore"):
        out[n - 1:] = np.where(means != 0, 100.0 * x.values[n - 1:] / means, np.nan)
    if np.any(means == 0):
        log.warning("disparity_%d_%s: %d rows excluded (zero mean)", n, x.name,
                    int(np.sum(means == 0)))
    return _from_valid(x.dates, out, f"disparity_{n}_{x.name}")


def momentum1(x: DailySeries, n: int) -> DailySeries:
    """Arithmetic n-day change."""
    if n < 1:
        raise ValueError("window must be >= 1")
    _require(x, n + 1, "momentum1")
    out = np.full(len(x), np.nan)
    out[n:] = x.values[n:] - x.values[:-n]
    return _from_valid(x.dates, out, f"momentum1_{n}_{x.name}")


def momentum2(x: DailySeries, n: int) -> DailySeries:
    """n-day ratio; zero-base rows are excluded."""
    if n < 1:
        raise ValueError("window must be >= 1")
    _require(x, n + 1, "momentum2")
    out = np.full(len(x), np.nan)
    base = x.values[:-n]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[n:] = np.where(base != 0, x.values[n:] / base, np.nan)
    if np.any(base == 0):
        log.warning("momentum2_%d_%s: %d rows excluded (zero base)", n, x.name,
                    int(np.sum(base == 0)))
    return _from_valid(x.dates, out, f"momentum2_{n}_{x.name}")


def rsi(x: DailySeries, n: int) -> DailySeries:
    """Wilder's relative strength index over n changes.

    All-gain windows read 100, all-loss windows 0; a perfectly flat
    window is scored at the 50 midpoint.
    """
    if n < 1:
        raise ValueError("window must be >= 1")
    _require(x, n + 1, "rsi")
    deltas = np.diff(x.values)
    gains = np.maximum(deltas, 0.0)
    losses = np.maximum(-deltas, 0.0)
    out = np.full(len(x), np.nan)
    avg_gain = float(np.mean(gains[:n]))
    avg_loss = float(np.mean(losses[:n]))

    def score(g: float, l: float) -> float:
        if l == 0.0 and g == 0.0:
            return 50.0
        if l == 0.0:
            return 100.0
        return 100.0 - 100.0 / (1.0 + g / l)

    out[n] = score(avg_gain, avg_loss)
    for t in range(n + 1, len(x)):
        avg_gain = (avg_gain * (n - 1) + gains[t - 1]) / n
        avg_loss = (avg_loss * (n - 1) + losses[t - 1]) / n
        out[t] = score(avg_gain, avg_loss)
    return _from_valid(x.dates, out, f"rsi_{n}_{x.name}")


def _rolling_extreme(values: np.ndarray, n: int, f) -> np.ndarray:
    out = np.full(values.shape[0], np.nan)
    for t in range(n - 1, values.shape[0]):
        out[t] = f(values[t - n + 1: t + 1])
    return out


def _check_panel(high: DailySeries, low: DailySeries, close: DailySeries) -> None:
    if high.dates != low.dates or high.dates != close.dates:
        raise DataError("high/low/close series are not date-aligned")


def williams_r(high: DailySeries, low: DailySeries, close: DailySeries,
               n: int) -> DailySeries:
    """Close position inside the n-day high/low range, on [-100, 0]."""
    if n < 1:
        raise ValueError("window must be >= 1")
    _check_panel(high, low, close)
    _require(close, n, "williams_r")
    hh = _rolling_extreme(high.values, n, np.max)
    ll = _rolling_extreme(low.values, n, np.min)
    out = np.full(len(close), np.nan)
    span = hh - ll
    flat = np.isfinite(span) & (span == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(span != 0, -100.0 * (hh - close.values) / span, out)
    out[flat] = -50.0
    if np.any(flat):
        log.warning("williams_r_%d: %d flat-range rows scored at -50", n,
                    int(np.sum(flat)))
    return _from_valid(close.dates, out, f"williams_r_{n}_{close.name}")


def stochastic_k(high: DailySeries, low: DailySeries, close: DailySeries,
                 n: int) -> DailySeries:
    """%K oscillator on [0, 100]; equals williams_r + 100 pointwise."""
    if n < 1:
        raise ValueError("window must be >= 1")
    _check_panel(high, low, close)
    _require(close, n, "stochastic_k")
    hh = _rolling_extreme(high.values, n, np.max)
    ll = _rolling_extreme(low.values, n, np.min)
    out = np.full(len(close), np.nan)
    span = hh - ll
    flat = np.isfinite(span) & (span == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(span != 0, 100.0 * (close.values - ll) / span, out)
    out[flat] = 50.0
    if np.any(flat):
        log.warning("stochastic_k_%d: %d flat-range rows scored at 50", n,
                    int(np.sum(flat)))
    return _from_valid(close.dates, out, f"stochastic_k_{n}_{close.name}")


def move_of(indicator: DailySeries) -> DailySeries:
    """Binary up-move of an indicator versus its previous value; ties are 0."""
    _require(indicator, 2, "move_of")
    moved = (indicator.values[1:] > indicator.values[:-1]).astype(float)
    return DailySeries(indicator.dates[1:], moved, f"move({indicator.name})")


def make_target(ivol: DailySeries) -> DailySeries:
    """Next-day up-move label: 1 when tomorrow's level is strictly higher.

    The final day has no next-day observation and is dropped.
    """
    _require(ivol, 2, "make_target")
    up = (ivol.values[1:] - ivol.values[:-1] > 0).astype(float)
    return DailySeries(ivol.dates[:-1], up, "target")


_LEVEL_FUNCS = {
    "ma": sma,
    "ema": ema,
    "roc": roc,
    "disparity": disparity,
    "momentum1": momentum1,
    "momentum2": momentum2,
    "rsi": rsi,
}


def compute_indicator(spec: IndicatorSpec, series: Mapping[str, DailySeries]) -> DailySeries:
    """Evaluate one Table-style spec against the original series."""
    if spec.technique == "williams_r":
        return williams_r(series["high"], series["low"], series["close"], spec.n)
    if spec.technique == "stochastic_k":
        return stochastic_k(series["high"], series["low"], series["close"], spec.n)
    base = spec.technique.removesuffix("_move")
    if base not in _LEVEL_FUNCS:
        raise ValueError(f"unknown technique {spec.technique!r}")
    level = _LEVEL_FUNCS[base](series[spec.applied_to], spec.n)
    return level if base == spec.technique else move_of(level)


@dataclass(frozen=True)
class FeatureMatrix:
    """Date-indexed feature columns plus the binary movement target."""

    dates: tuple[date, ...]
    columns: tuple[str, ...]
    X: np.ndarray
    target: np.ndarray
    source_tags: tuple[str, ...]

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=float)
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        y = np.asarray(self.target, dtype=float)
        y.setflags(write=False)
        object.__setattr__(self, "target", y)
        n, d = X.shape
        if len(self.dates) != n or y.shape != (n,):
            raise DataError("feature matrix shape mismatch")
        if len(self.columns) != d or len(self.source_tags) != d:
            raise DataError("column names / tags misaligned with matrix")
        if not np.all(np.isfinite(X)):
            raise DataError("feature matrix contains non-finite entries")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("target labels must be 0/1")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_columns(self) -> int:
        return self.X.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.columns.index(name)]

    def mask_sources(self, enabled: frozenset[str] | set[str]) -> "FeatureMatrix":
        """Keep only columns whose source tag is enabled."""
        enabled = frozenset(enabled)
        unknown = enabled - ALL_SOURCES
        if unknown:
            raise ValueError(f"unknown sources {sorted(unknown)}")
        if not enabled:
            raise DataError("scenario enables no sources")
        keep = [i for i, tag in enumerate(self.source_tags) if tag in enabled]
        if not keep:
            raise DataError("mask removed every column")
        return FeatureMatrix(
            self.dates,
            tuple(self.columns[i] for i in keep),
            self.X[:, keep],
            self.target,
            tuple(self.source_tags[i] for i in keep),
        )


def source_of_column(name: str) -> str:
    """Derive a column's source tag from its canonical name."""
    if name in SOURCE_OF:
        return SOURCE_OF[name]
    series = name.rsplit("_", 1)[-1]
    if series not in SOURCE_OF:
        raise DataError(f"cannot derive source for column {name!r}")
    return SOURCE_OF[series]


def build_feature_matrix(
    series: Mapping[str, DailySeries],
    sources: frozenset[str] | set[str] = ALL_SOURCES,
) -> FeatureMatrix:
    """Assemble the feature matrix from the eight original series.

    ``series`` must hold the keys open, high, low, close, volume, ivol,
    news, pageviews, all on the same trading-day index. Rows that any
    retained column lacks (warm-up or excluded) are dropped globally, as
    is the final unlabeled day.
    """
    missing = [k for k in ORIGINAL_SERIES if k not in series]
    if missing:
        raise DataError(f"missing original series {missing}")
    base_dates = series["close"].dates
    for key in ORIGINAL_SERIES:
        if series[key].dates != base_dates:
            raise DataError(f"series {key!r} is not calendar-aligned with close")
    sources = frozenset(sources)
    if not sources:
        raise DataError("scenario enables no sources")
    if sources - ALL_SOURCES:
        raise ValueError(f"unknown sources {sorted(sources - ALL_SOURCES)}")

    named: list[tuple[str, str, DailySeries]] = []  # (column, tag, series)
    for key in ORIGINAL_SERIES:
        if SOURCE_OF[key] in sources:
            named.append((key, SOURCE_OF[key], series[key]))
    for spec in table_specs():
        if spec.source not in sources:
            continue
        named.append((spec.column_name, spec.source, compute_indicator(spec, series)))

    target_full = make_target(series["ivol"])

    common = set(target_full.dates)
    for _, _, col in named:
        common &= set(col.dates)
    if not common:
        raise DataError("no rows survive warm-up and target truncation")
    dates = tuple(sorted(common))

    X = np.column_stack([col.restrict(dates).values for _, _, col in named])
    matrix = FeatureMatrix(
        dates,
        tuple(name for name, _, _ in named),
        X,
        target_full.restrict(dates).values,
        tuple(tag for _, tag, _ in named),
    )
    if sources == ALL_SOURCES and matrix.n_columns != 78:
        raise DataError(f"expected 78 columns with all sources, got {matrix.n_columns}")
    return matrix


FEATURES_DATE_COLUMN = "date"
FEATURES_TARGET_COLUMN = "target"


def write_features_csv(path: str | Path, matrix: FeatureMatrix,
                       header_lines: Sequence[str] = ()) -> None:
    """features.csv: date column, canonical feature columns, final target."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join((FEATURES_DATE_COLUMN,) + matrix.columns
                          + (FEATURES_TARGET_COLUMN,)) + "\n")
        for i, d in enumerate(matrix.dates):
            cells = [d.isoformat()]
            cells += [repr(float(v)) for v in matrix.X[i]]
            cells.append(str(int(matrix.target[i])))
            fh.write(",".join(cells) + "\n")


def load_features_csv(path: str | Path) -> FeatureMatrix:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    header: list[str] | None = None
    dates: list[date] = []
    rows: list[list[float]] = []
    target: list[float] = []
    with path.open(newline="") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            fields = next(csv.reader([line]))
            if header is None:
                header = fields
                if (header[0] != FEATURES_DATE_COLUMN
                        or header[-1] != FEATURES_TARGET_COLUMN):
                    raise SchemaError(
                        f"{path}:{line_no}: features header must start with "
                        f"'{FEATURES_DATE_COLUMN}' and end with "
                        f"'{FEATURES_TARGET_COLUMN}'"
                    )
                continue
            if len(fields) != len(header):
                raise SchemaError(
                    f"{path}:{line_no}: expected {len(header)} fields, got {len(fields)}"
                )
            try:
                dates.append(date.fromisoformat(fields[0]))
                rows.append([float(v) for v in fields[1:-1]])
                target.append(float(fields[-1]))
            except ValueError as exc:
                raise SchemaError(f"{path}:{line_no}: {exc}") from None
    if header is None:
        raise SchemaError(f"{path}: empty features file")
    columns = tuple(header[1:-1])
    tags = tuple(source_of_column(c) for c in columns)
    return FeatureMatrix(tuple(dates), columns, np.array(rows), np.array(target), tags)
