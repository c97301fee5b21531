"""Loading, validation, and calendar alignment of the raw daily inputs.

Canonical CSV schemas (ISO-8601 dates, decimal point, no thousands
separators; lines starting with '#' are header comments and are skipped):

    bars.csv    date,open,high,low,close,volume
    counts.csv  date,count
    options.csv trade_date,expiry,strike,type,bid,ask   (type in {C,P})

Loaders are strict: malformed rows, duplicate dates, NaN or negative
prices, and OHLC violations raise ``SchemaError`` naming the offending
line. Writers emit the same canonical form, so write(load(f)) is a
byte-level fixed point (modulo line endings).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, SchemaError

BAR_HEADER = ("date", "open", "high", "low", "close", "volume")
COUNT_HEADER = ("date", "count")
OPTION_HEADER = ("trade_date", "expiry", "strike", "type", "bid", "ask")

ALIGN_POLICIES = ("drop", "sum_into_next", "carry_forward")


@dataclass(frozen=True)
class Bar:
    """One daily OHLCV bar."""

    date: date
    open: float
    high: float
    low: float
    close: float
    volume: int

    def __post_init__(self) -> None:
        prices = (self.open, self.high, self.low, self.close)
        if any(not math.isfinite(p) or p < 0 for p in prices):
            raise DataError(f"{self.date}: non-finite or negative price in bar")
        if self.low > min(self.open, self.close):
            raise DataError(f"{self.date}: low {self.low} above open/close")
        if self.high < max(self.open, self.close):
            raise DataError(f"{self.date}: high {self.high} below open/close")
        if self.volume < 0:
            raise DataError(f"{self.date}: negative volume {self.volume}")


@dataclass(frozen=True)
class CountObservation:
    """A single daily count (news articles, page views)."""

    date: date
    count: int

    def __post_init__(self) -> None:
        if self.count < 0:
            raise DataError(f"{self.date}: negative count {self.count}")


@dataclass(frozen=True)
class RawOptionQuote:
    """One end-of-day option quote."""

    trade_date: date
    expiry: date
    strike: float
    is_call: bool
    bid: float
    ask: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.strike) and self.strike > 0):
            raise DataError(f"{self.trade_date}: non-positive strike {self.strike}")
        if not (math.isfinite(self.bid) and math.isfinite(self.ask)):
            raise DataError(f"{self.trade_date}: non-finite quote at K={self.strike}")
        if self.bid < 0 or self.bid > self.ask:
            raise DataError(
                f"{self.trade_date}: bid/ask violation ({self.bid}/{self.ask}) "
                f"at K={self.strike}"
            )
        if self.expiry <= self.trade_date:
            raise DataError(f"{self.trade_date}: expiry {self.expiry} not in the future")

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)


@dataclass(frozen=True)
class TradingCalendar:
    """Ordered trading days of the study window (weekends rejected)."""

    days: tuple[date, ...]

    def __post_init__(self) -> None:
        if not self.days:
            raise DataError("empty trading calendar")
        for prev, cur in zip(self.days, self.days[1:]):
            if cur <= prev:
                raise DataError(f"calendar not strictly increasing at {cur}")
        for d in self.days:
            if d.weekday() >= 5:
                raise DataError(f"calendar contains weekend day {d}")

    @classmethod
    def from_bars(cls, bars: Sequence[Bar]) -> "TradingCalendar":
        return cls(tuple(b.date for b in bars))

    def __len__(self) -> int:
        return len(self.days)

    def __contains__(self, d: date) -> bool:
        return d in set(self.days)

    def index(self, d: date) -> int:
        return self.days.index(d)


@dataclass(frozen=True)
class DailySeries:
    """A named, date-indexed series of finite values.

    Dates are strictly increasing but need not be contiguous: indicator
    rows excluded for undefined values (for example a zero denominator)
    simply disappear from the index.
    """

    dates: tuple[date, ...]
    values: np.ndarray
    name: str

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or len(self.dates) != values.shape[0]:
            raise DataError(f"{self.name}: dates/values length mismatch")
        if not np.all(np.isfinite(values)):
            raise DataError(f"{self.name}: non-finite values")
        for prev, cur in zip(self.dates, self.dates[1:]):
            if cur <= prev:
                raise DataError(f"{self.name}: dates not strictly increasing at {cur}")

    def __len__(self) -> int:
        return len(self.dates)

    def restrict(self, wanted: Sequence[date]) -> "DailySeries":
        """Subset to ``wanted`` dates (all must be present)."""
        lookup = {d: i for i, d in enumerate(self.dates)}
        try:
            idx = [lookup[d] for d in wanted]
        except KeyError as exc:
            raise DataError(f"{self.name}: missing date {exc.args[0]}") from None
        return DailySeries(tuple(wanted), self.values[idx], self.name)


# ---------------------------------------------------------------------------
# CSV plumbing


def _parse_date(text: str, path: Path, line_no: int) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise SchemaError(f"{path}:{line_no}: bad date {text!r}") from None


def _parse_price(text: str, path: Path, line_no: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SchemaError(f"{path}:{line_no}: bad number {text!r} in {column}") from None
    if not math.isfinite(value):
        raise SchemaError(f"{path}:{line_no}: non-finite {column} {text!r}")
    if value < 0:
        raise SchemaError(f"{path}:{line_no}: negative {column} {text!r}")
    return value


def _parse_count(text: str, path: Path, line_no: int, column: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise SchemaError(f"{path}:{line_no}: bad integer {text!r} in {column}") from None
    if value < 0:
        raise SchemaError(f"{path}:{line_no}: negative {column} {text!r}")
    return value


def _read_rows(path: Path, header: tuple[str, ...]) -> list[tuple[int, list[str]]]:
    """Read a canonical CSV, returning (line_no, fields) data rows."""
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    rows: list[tuple[int, list[str]]] = []
    header_seen = False
    with path.open(newline="") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            fields = next(csv.reader([line]))
            if not header_seen:
                if tuple(f.strip() for f in fields) != header:
                    raise SchemaError(
                        f"{path}:{line_no}: header {fields!r} does not match "
                        f"expected {','.join(header)!r}"
                    )
                header_seen = True
                continue
            if len(fields) != len(header):
                raise SchemaError(
                    f"{path}:{line_no}: expected {len(header)} fields, got {len(fields)}"
                )
            rows.append((line_no, fields))
    if not header_seen:
        raise SchemaError(f"{path}: empty file, expected header {','.join(header)!r}")
    return rows


def _write_csv(path: Path, header: tuple[str, ...], rows: Iterable[Sequence[str]],
               header_lines: Sequence[str] = ()) -> None:
    with path.open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def format_price(value: float) -> str:
    """Shortest round-trip decimal form, the canonical on-disk format."""
    return repr(float(value))


# ---------------------------------------------------------------------------
# Loaders / writers


def load_bars(path: str | Path) -> list[Bar]:
    """Load and validate bars.csv, sorted check included."""
    path = Path(path)
    bars: list[Bar] = []
    seen: set[date] = set()
    for line_no, fields in _read_rows(path, BAR_HEADER):
        d = _parse_date(fields[0], path, line_no)
        if d in seen:
            raise SchemaError(f"{path}:{line_no}: duplicate date {d}")
        seen.add(d)
        o, h, l, c = (
            _parse_price(fields[i], path, line_no, BAR_HEADER[i]) for i in range(1, 5)
        )
        v = _parse_count(fields[5], path, line_no, "volume")
        try:
            bar = Bar(d, o, h, l, c, v)
        except DataError as exc:
            raise SchemaError(f"{path}:{line_no}: {exc}") from None
        if bars and bar.date <= bars[-1].date:
            raise SchemaError(f"{path}:{line_no}: dates out of order at {bar.date}")
        bars.append(bar)
    return bars


def write_bars(path: str | Path, bars: Sequence[Bar],
               header_lines: Sequence[str] = ()) -> None:
    rows = (
        (b.date.isoformat(), format_price(b.open), format_price(b.high),
         format_price(b.low), format_price(b.close), str(b.volume))
        for b in bars
    )
    _write_csv(Path(path), BAR_HEADER, rows, header_lines)


def load_counts(path: str | Path) -> list[CountObservation]:
    path = Path(path)
    out: list[CountObservation] = []
    seen: set[date] = set()
    for line_no, fields in _read_rows(path, COUNT_HEADER):
        d = _parse_date(fields[0], path, line_no)
        if d in seen:
            raise SchemaError(f"{path}:{line_no}: duplicate date {d}")
        seen.add(d)
        out.append(CountObservation(d, _parse_count(fields[1], path, line_no, "count")))
    out.sort(key=lambda o: o.date)
    return out


def write_counts(path: str | Path, observations: Sequence[CountObservation],
                 header_lines: Sequence[str] = ()) -> None:
    rows = ((o.date.isoformat(), str(o.count)) for o in observations)
    _write_csv(Path(path), COUNT_HEADER, rows, header_lines)


def load_options(path: str | Path) -> list[RawOptionQuote]:
    path = Path(path)
    out: list[RawOptionQuote] = []
    for line_no, fields in _read_rows(path, OPTION_HEADER):
        trade_date = _parse_date(fields[0], path, line_no)
        expiry = _parse_date(fields[1], path, line_no)
        strike = _parse_price(fields[2], path, line_no, "strike")
        kind = fields[3].strip()
        if kind not in ("C", "P"):
            raise SchemaError(f"{path}:{line_no}: option type must be C or P, got {kind!r}")
        bid = _parse_price(fields[4], path, line_no, "bid")
        ask = _parse_price(fields[5], path, line_no, "ask")
        try:
            out.append(RawOptionQuote(trade_date, expiry, strike, kind == "C", bid, ask))
        except DataError as exc:
            raise SchemaError(f"{path}:{line_no}: {exc}") from None
    return out


def write_options(path: str | Path, quotes: Sequence[RawOptionQuote],
                  header_lines: Sequence[str] = ()) -> None:
    rows = (
        (q.trade_date.isoformat(), q.expiry.isoformat(), format_price(q.strike),
         "C" if q.is_call else "P", format_price(q.bid), format_price(q.ask))
        for q in quotes
    )
    _write_csv(Path(path), OPTION_HEADER, rows, header_lines)


# ---------------------------------------------------------------------------
# Calendar alignment


def bar_series(bars: Sequence[Bar], field: str, name: str | None = None) -> DailySeries:
    """Extract one OHLCV field as a DailySeries."""
    values = np.array([getattr(b, field) for b in bars], dtype=float)
    return DailySeries(tuple(b.date for b in bars), values, name or field)


def align_to_calendar(series: Sequence[CountObservation], cal: TradingCalendar,
                      policy: str = "drop", name: str = "counts") -> DailySeries:
    """Map raw daily counts onto trading days.

    drop            keep trading-day observations only; every trading day
                    must be observed.
    sum_into_next   non-trading-day counts are added to the next trading
                    day; counts after the final trading day are discarded.
    carry_forward   a missing trading day reuses the previous trading
                    day's value.
    """
    if policy not in ALIGN_POLICIES:
        raise ValueError(f"unknown alignment policy {policy!r}")
    if not series:
        raise DataError("empty count series")
    by_date: dict[date, int] = {}
    for obs in series:
        if obs.date in by_date:
            raise DataError(f"duplicate observation for {obs.date}")
        by_date[obs.date] = obs.count

    trading = set(cal.days)
    values = np.empty(len(cal.days), dtype=float)

    if policy == "drop":
        for i, d in enumerate(cal.days):
            if d not in by_date:
                raise DataError(f"no observation for trading day {d} under policy 'drop'")
            values[i] = by_date[d]
    elif policy == "sum_into_next":
        pending = {d: c for d, c in by_date.items() if d not in trading}
        for i, d in enumerate(cal.days):
            if d not in by_date:
                raise DataError(
                    f"no observation for trading day {d} under policy 'sum_into_next'"
                )
            carried = sum(c for nd, c in pending.items() if nd < d)
            pending = {nd: c for nd, c in pending.items() if nd >= d}
            values[i] = by_date[d] + carried
    else:  # carry_forward
        last: float | None = None
        for i, d in enumerate(cal.days):
            if d in by_date:
                last = float(by_date[d])
            elif last is None:
                raise DataError(
                    f"no value derivable for first trading day {d} under "
                    f"policy 'carry_forward'"
                )
            values[i] = last
    return DailySeries(cal.days, values, name)
