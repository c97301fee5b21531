"""Generalized VIX-style market implied volatility from an option chain.

Per-term annualized variance follows the standard volatility-index
construction:

    sigma^2 = (2/T) * sum_i (dK_i / K_i^2) * exp(R*T) * Q(K_i)
              - (1/T) * (F/K0 - 1)^2

with F the forward level from put-call parity at the strike minimizing
|C - P|, K0 the largest strike at or below F, Q the out-of-the-money
mid quote, and dK the half-distance between neighbouring selected
strikes (one-sided at the edges). The constant-maturity index linearly
interpolates total variance T*sigma^2 between the near and next terms
and is quoted as 100 * sqrt(variance).

Day counts use calendar days / 365 throughout; end-of-day data gives no
finer granularity.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data_ingest import DailySeries, RawOptionQuote, TradingCalendar, _read_rows, _write_csv
from .errors import DataError, DegenerateChainError, SchemaError

log = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.0
IVOL_HEADER = ("date", "ivol", "near_expiry", "next_expiry")


@dataclass(frozen=True)
class ExpirySlice:
    """All quotes of one expiry on one trade date, with rate and tenor."""

    expiry: date
    T: float
    R: float
    quotes: tuple[RawOptionQuote, ...]

    def __post_init__(self) -> None:
        if self.T <= 0:
            raise DataError(f"{self.expiry}: non-positive year fraction {self.T}")
        if any(q.expiry != self.expiry for q in self.quotes):
            raise DataError(f"{self.expiry}: slice contains foreign expiries")


@dataclass(frozen=True)
class VarianceStrip:
    """Selected out-of-the-money contributions for one term."""

    F: float
    K0: float
    contributions: tuple[tuple[float, float, float], ...]  # (K_i, dK_i, Q(K_i))
    sigma2: float | None = None

    def __post_init__(self) -> None:
        if self.K0 > self.F:
            raise DataError(f"K0 {self.K0} above forward {self.F}")
        strikes = [k for k, _, _ in self.contributions]
        if strikes != sorted(strikes):
            raise DataError("strip contributions not sorted by strike")
        if any(dk <= 0 for _, dk, _ in self.contributions):
            raise DataError("non-positive strike interval in strip")
        if any(q < 0 for _, _, q in self.contributions):
            raise DataError("negative quote in strip")


@dataclass(frozen=True)
class IvolPoint:
    date: date
    ivol: float
    near_expiry: date
    next_expiry: date

    def __post_init__(self) -> None:
        if not (math.isfinite(self.ivol) and self.ivol >= 0):
            raise DataError(f"{self.date}: invalid ivol {self.ivol}")


def _sides_by_strike(quotes: Sequence[RawOptionQuote]) -> dict[float, dict[bool, RawOptionQuote]]:
    sides: dict[float, dict[bool, RawOptionQuote]] = {}
    for q in quotes:
        sides.setdefault(q.strike, {})[q.is_call] = q
    return sides


def forward_level(chain: ExpirySlice) -> float:
    """Forward from put-call parity at the strike minimizing |C - P|.

    Only strikes with positive call and put mids qualify; ties go to the
    lowest strike.
    """
    sides = _sides_by_strike(chain.quotes)
    best: tuple[float, float] | None = None  # (|C-P|, strike)
    parity: dict[float, float] = {}
    for strike in sorted(sides):
        pair = sides[strike]
        if True not in pair or False not in pair:
            continue
        call_mid, put_mid = pair[True].mid, pair[False].mid
        if call_mid <= 0 or put_mid <= 0:
            continue
        gap = abs(call_mid - put_mid)
        parity[strike] = call_mid - put_mid
        if best is None or gap < best[0]:
            best = (gap, strike)
    if best is None:
        raise DegenerateChainError(
            f"{chain.expiry}: no strike quoted on both sides with positive mids"
        )
    k_star = best[1]
    return k_star + math.exp(chain.R * chain.T) * parity[k_star]


def _truncate_zero_bids(quotes: list[RawOptionQuote]) -> list[RawOptionQuote]:
    """Walk outward from the money: drop zero bids, stop after two in a row."""
    kept: list[RawOptionQuote] = []
    zero_run = 0
    for q in quotes:
        if q.bid <= 0:
            zero_run += 1
            if zero_run >= 2:
                break
            continue
        zero_run = 0
        kept.append(q)
    return kept


def select_strip(chain: ExpirySlice, F: float) -> VarianceStrip:
    """Pick the out-of-the-money quotes entering the variance sum."""
    sides = _sides_by_strike(chain.quotes)
    strikes = sorted(sides)
    at_or_below = [k for k in strikes if k <= F]
    if not at_or_below:
        raise DegenerateChainError(f"{chain.expiry}: forward {F} below lowest strike")
    k0 = max(at_or_below)

    puts_out = [sides[k][False] for k in reversed(strikes)
                if k < k0 and False in sides[k]]
    calls_out = [sides[k][True] for k in strikes if k > k0 and True in sides[k]]
    puts_kept = _truncate_zero_bids(puts_out)
    calls_kept = _truncate_zero_bids(calls_out)

    quotes_by_strike: dict[float, float] = {}
    for q in puts_kept:
        quotes_by_strike[q.strike] = q.mid
    at_money = sides[k0]
    mids = [at_money[s].mid for s in (False, True)
            if s in at_money and at_money[s].bid > 0]
    if mids:
        quotes_by_strike[k0] = sum(mids) / len(mids)
    for q in calls_kept:
        quotes_by_strike[q.strike] = q.mid

    kept = sorted(quotes_by_strike)
    if not kept:
        raise DegenerateChainError(f"{chain.expiry}: empty strip after selection")
    if len(kept) == 1:
        raise DegenerateChainError(
            f"{chain.expiry}: single surviving strike, no interval derivable"
        )

    contributions = []
    for i, k in enumerate(kept):
        if i == 0:
            dk = kept[1] - kept[0]
        elif i == len(kept) - 1:
            dk = kept[-1] - kept[-2]
        else:
            dk = 0.5 * (kept[i + 1] - kept[i - 1])
        contributions.append((k, dk, quotes_by_strike[k]))
    return VarianceStrip(F=F, K0=k0, contributions=tuple(contributions))


def term_variance(strip: VarianceStrip, T: float, R: float) -> float:
    """Annualized variance of one term; negative values are degenerate."""
    if not strip.contributions:
        raise DegenerateChainError("empty variance strip")
    ks = np.array([k for k, _, _ in strip.contributions])
    dks = np.array([dk for _, dk, _ in strip.contributions])
    qs = np.array([q for _, _, q in strip.contributions])
    total = (2.0 / T) * float(np.sum(dks / ks**2 * math.exp(R * T) * qs))
    correction = (1.0 / T) * (strip.F / strip.K0 - 1.0) ** 2
    sigma2 = total - correction
    if sigma2 < 0:
        raise DegenerateChainError(
            f"negative term variance {sigma2:.3e} (F={strip.F}, K0={strip.K0})"
        )
    return sigma2


def interpolate_constant_maturity(
    near: tuple[float, float],
    next_term: tuple[float, float] | None,
    target_T: float,
    clamp: bool = False,
    method: str = "variance",
) -> float:
    """Constant-maturity implied volatility in index points (x100).

    ``method="variance"`` interpolates total variance T*sigma^2 linearly in
    time (the white-paper convention); ``method="volatility"`` interpolates
    the volatilities themselves with the same time weights (exposed for
    sensitivity checks only).
    """
    if method not in ("variance", "volatility"):
        raise ValueError(f"unknown interpolation method {method!r}")
    t1, s1 = near
    if next_term is None:
        if not clamp:
            raise DataError("second term required when clamping is disabled")
        log.warning("single expiry available; returning its volatility uninterpolated")
        return 100.0 * math.sqrt(s1)
    t2, s2 = next_term
    if t2 < t1:
        raise DataError(f"terms out of order: T1={t1} > T2={t2}")
    if target_T == t1 or t2 == t1:
        return 100.0 * math.sqrt(s1)
    if target_T == t2:
        return 100.0 * math.sqrt(s2)
    if not (t1 < target_T <= t2):
        if not clamp:
            raise DataError(
                f"target {target_T:.6f} outside term range [{t1:.6f}, {t2:.6f}] "
                f"and clamping disabled"
            )
        return 100.0 * math.sqrt(s1 if target_T < t1 else s2)
    w1 = (t2 - target_T) / (t2 - t1)
    w2 = (target_T - t1) / (t2 - t1)
    if method == "volatility":
        return 100.0 * (w1 * math.sqrt(s1) + w2 * math.sqrt(s2))
    total_var = w1 * t1 * s1 + w2 * t2 * s2
    return 100.0 * math.sqrt(total_var / target_T)


def _group_by_day_and_expiry(
    quotes: Sequence[RawOptionQuote],
) -> dict[date, dict[date, list[RawOptionQuote]]]:
    grouped: dict[date, dict[date, list[RawOptionQuote]]] = {}
    for q in quotes:
        grouped.setdefault(q.trade_date, {}).setdefault(q.expiry, []).append(q)
    return grouped


def daily_ivol_series(
    quotes: Sequence[RawOptionQuote],
    calendar: TradingCalendar,
    target_days: int = 30,
    rate: float = 0.01,
    rate_by_date: Mapping[date, float] | None = None,
    min_near_days: int = 7,
    clamp: bool = False,
    method: str = "variance",
) -> list[IvolPoint]:
    """One constant-maturity implied volatility point per trading day.

    The near term is the closest expiry at least ``min_near_days`` calendar
    days out (expiry-week quotes are too distorted to anchor the index);
    the next term is the following expiry.
    """
    grouped = _group_by_day_and_expiry(quotes)
    target_T = target_days / DAYS_PER_YEAR
    points: list[IvolPoint] = []
    for day in calendar.days:
        chains = grouped.get(day)
        if not chains:
            raise DegenerateChainError(f"no option quotes for trading day {day}")
        r = rate_by_date.get(day, rate) if rate_by_date is not None else rate
        usable = sorted(e for e in chains
                        if (e - day).days >= min_near_days)
        if not usable:
            raise DegenerateChainError(
                f"{day}: no expiry at least {min_near_days} days out"
            )
        near_expiry = usable[0]
        next_expiry = usable[1] if len(usable) > 1 else None
        try:
            terms = []
            for expiry in (near_expiry, next_expiry):
                if expiry is None:
                    terms.append(None)
                    continue
                t = (expiry - day).days / DAYS_PER_YEAR
                chain = ExpirySlice(expiry, t, r, tuple(chains[expiry]))
                f = forward_level(chain)
                strip = select_strip(chain, f)
                terms.append((t, term_variance(strip, t, r)))
            ivol = interpolate_constant_maturity(
                terms[0], terms[1], target_T, clamp=clamp, method=method
            )
        except (DegenerateChainError, DataError) as exc:
            raise DegenerateChainError(f"{day}: {exc}") from exc
        points.append(
            IvolPoint(day, ivol, near_expiry, next_expiry or near_expiry)
        )
    return points


def compute_strip(chain: ExpirySlice) -> VarianceStrip:
    """Forward, selection, and variance for one expiry in one call."""
    f = forward_level(chain)
    strip = select_strip(chain, f)
    return replace(strip, sigma2=term_variance(strip, chain.T, chain.R))


def ivol_points_to_series(points: Sequence[IvolPoint]) -> DailySeries:
    values = np.array([p.ivol for p in points])
    return DailySeries(tuple(p.date for p in points), values, "ivol")


def write_ivol_csv(path: str | Path, points: Sequence[IvolPoint],
                   header_lines: Sequence[str] = ()) -> None:
    rows = (
        (p.date.isoformat(), f"{p.ivol:.6f}",
         p.near_expiry.isoformat(), p.next_expiry.isoformat())
        for p in points
    )
    _write_csv(Path(path), IVOL_HEADER, rows, header_lines)


def load_ivol_csv(path: str | Path) -> DailySeries:
    path = Path(path)
    dates: list[date] = []
    values: list[float] = []
    for line_no, fields in _read_rows(path, IVOL_HEADER):
        try:
            dates.append(date.fromisoformat(fields[0]))
            values.append(float(fields[1]))
        except ValueError as exc:
            raise SchemaError(f"{path}:{line_no}: {exc}") from None
    return DailySeries(tuple(dates), np.array(values), "ivol")


def load_rates_csv(path: str | Path) -> dict[date, float]:
    """Optional rates.csv: date,rate (annualized decimal)."""
    path = Path(path)
    out: dict[date, float] = {}
    for line_no, fields in _read_rows(path, ("date", "rate")):
        try:
            out[date.fromisoformat(fields[0])] = float(fields[1])
        except ValueError as exc:
            raise SchemaError(f"{path}:{line_no}: {exc}") from None
    return out
