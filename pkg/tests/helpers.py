"""Shared synthetic-data builders and independent oracles for the tests.

Everything here is deliberately written the slow, obvious way (explicit
loops, textbook formulas) so it can serve as an oracle for the
vectorized implementations under test.
"""

from __future__ import annotations

import math
from datetime import date, timedelta

import numpy as np
from scipy.special import ndtr

from ivol_lab.data_ingest import Bar, DailySeries, RawOptionQuote
from ivol_lab.feature_factory import FeatureMatrix


def weekdays(start: date, n: int) -> tuple[date, ...]:
    days = []
    d = start
    while len(days) < n:
        if d.weekday() < 5:
            days.append(d)
        d += timedelta(days=1)
    return tuple(days)


def make_bars(dates, seed: int = 0) -> list[Bar]:
    rng = np.random.default_rng(seed)
    close = 100.0 * np.exp(np.cumsum(rng.normal(0, 0.01, len(dates))))
    bars = []
    prev_close = close[0]
    for i, d in enumerate(dates):
        o = prev_close
        c = close[i]
        hi = max(o, c) * (1.0 + abs(rng.normal(0, 0.003)))
        lo = min(o, c) * (1.0 - abs(rng.normal(0, 0.003)))
        bars.append(Bar(d, float(o), float(hi), float(lo), float(c),
                        int(rng.integers(1_000, 50_000))))
        prev_close = c
    return bars


def make_original_series(n_days: int, seed: int = 0,
                         start: date = date(2016, 1, 4)) -> dict[str, DailySeries]:
    """The eight inputs of the feature matrix on a synthetic calendar."""
    dates = weekdays(start, n_days)
    rng = np.random.default_rng(seed)
    bars = make_bars(dates, seed)
    series = {
        name: DailySeries(dates, np.array([getattr(b, name) for b in bars]), name)
        for name in ("open", "high", "low", "close", "volume")
    }
    ivol = 20.0 + np.cumsum(rng.normal(0, 0.3, n_days))
    ivol = np.abs(ivol) + 1.0
    series["ivol"] = DailySeries(dates, ivol, "ivol")
    series["news"] = DailySeries(
        dates, rng.poisson(40, n_days).astype(float) + 1.0, "news")
    series["pageviews"] = DailySeries(
        dates, rng.poisson(5000, n_days).astype(float) + 1.0, "pageviews")
    return series


SYNTH_COLUMNS = ("close", "volume", "ivol", "ma_3_ivol",
                 "news", "ma_3_news", "pageviews", "ma_3_pageviews")
SYNTH_TAGS = ("market", "market", "option", "option",
              "news", "news", "wikipedia", "wikipedia")


def synthetic_matrix(n_rows: int, seed: int = 0, informative: bool = False,
                     labels: np.ndarray | None = None) -> FeatureMatrix:
    """Small eight-column matrix spanning all four source tags.

    With ``informative=True`` the label is a deterministic threshold on
    the first (market-tagged) column; otherwise labels are random or
    supplied explicitly.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_rows, len(SYNTH_COLUMNS)))
    if labels is not None:
        y = np.asarray(labels, dtype=float)
    elif informative:
        y = (X[:, 0] > 0).astype(float)
    else:
        y = (rng.random(n_rows) < 0.45).astype(float)
    dates = weekdays(date(2016, 1, 4), n_rows)
    return FeatureMatrix(dates, SYNTH_COLUMNS, X, y, SYNTH_TAGS)


# ---------------------------------------------------------------------------
# Black-Scholes chain generator (pricing oracle for the ivol engine)


def bs_price(S: float, K: float, T: float, r: float, sigma: float,
             is_call: bool) -> float:
    d1 = (math.log(S / K) + (r + 0.5 * sigma**2) * T) / (sigma * math.sqrt(T))
    d2 = d1 - sigma * math.sqrt(T)
    call = S * float(ndtr(d1)) - K * math.exp(-r * T) * float(ndtr(d2))
    if is_call:
        return call
    return call - S + K * math.exp(-r * T)


def make_bs_chain(trade: date, expiry: date, S: float, r: float, sigma: float,
                  n_per_side: int = 200, width_sd: float = 8.0) -> list[RawOptionQuote]:
    """Flat-volatility European chain quoted at exact model prices."""
    T = (expiry - trade).days / 365.0
    F = S * math.exp(r * T)
    sd = sigma * math.sqrt(T)
    lo, hi = F * math.exp(-width_sd * sd), F * math.exp(width_sd * sd)
    strikes = np.linspace(lo, hi, 2 * n_per_side + 1)
    quotes = []
    for K in strikes:
        for is_call in (True, False):
            p = max(bs_price(S, float(K), T, r, sigma, is_call), 0.0)
            quotes.append(RawOptionQuote(trade, expiry, float(K), is_call, p, p))
    return quotes


def write_pipeline_inputs(directory, n_days: int, seed: int = 0,
                          n_per_side: int = 25) -> dict[str, object]:
    """Synthetic bars/options/news/wiki CSVs for CLI-level runs.

    Daily chains are flat-volatility Black-Scholes quotes whose sigma
    wanders smoothly, so the implied-volatility series has both up and
    down moves.
    """
    from pathlib import Path

    from ivol_lab.data_ingest import (
        CountObservation, write_bars, write_counts, write_options,
    )

    directory = Path(directory)
    rng = np.random.default_rng(seed)
    dates = weekdays(date(2016, 1, 4), n_days)
    bars = make_bars(dates, seed)
    write_bars(directory / "bars.csv", bars)

    quotes = []
    for t, d in enumerate(dates):
        sigma = 0.2 + 0.05 * math.sin(2 * math.pi * t / 17) + 0.01 * rng.standard_normal()
        sigma = max(sigma, 0.05)
        for dte in (21, 42):
            quotes += make_bs_chain(d, d + timedelta(days=dte), 100.0, 0.01,
                                    sigma, n_per_side=n_per_side, width_sd=6.0)
    write_options(directory / "options.csv", quotes)

    all_days = [dates[0] + timedelta(days=i)
                for i in range((dates[-1] - dates[0]).days + 1)]
    news = [CountObservation(d, int(rng.poisson(40)) + 1) for d in all_days]
    wiki = [CountObservation(d, int(rng.poisson(5000)) + 1) for d in all_days]
    write_counts(directory / "news.csv", news)
    write_counts(directory / "wiki.csv", wiki)
    return {"dates": dates, "paths": {name: directory / f"{name}.csv"
                                      for name in ("bars", "options", "news", "wiki")}}


# ---------------------------------------------------------------------------
# Brute-force indicator oracles (one value at a time, trailing windows)


def brute_sma(x: np.ndarray, n: int, t: int) -> float:
    return float(np.mean(x[t - n + 1: t + 1]))


def brute_ema(x: np.ndarray, n: int, t: int) -> float:
    alpha = 2.0 / (n + 1)
    level = float(np.mean(x[:n]))
    for k in range(n, t + 1):
        level = level + alpha * (x[k] - level)
    return level


def brute_roc(x: np.ndarray, n: int, t: int) -> float:
    return 100.0 * (x[t] - x[t - n]) / x[t - n]


def brute_disparity(x: np.ndarray, n: int, t: int) -> float:
    return 100.0 * x[t] / brute_sma(x, n, t)


def brute_momentum1(x: np.ndarray, n: int, t: int) -> float:
    return float(x[t] - x[t - n])


def brute_momentum2(x: np.ndarray, n: int, t: int) -> float:
    return float(x[t] / x[t - n])


def brute_rsi(x: np.ndarray, n: int, t: int) -> float:
    gains = [max(x[k] - x[k - 1], 0.0) for k in range(1, t + 1)]
    losses = [max(x[k - 1] - x[k], 0.0) for k in range(1, t + 1)]
    avg_gain = sum(gains[:n]) / n
    avg_loss = sum(losses[:n]) / n
    for k in range(n, t):
        avg_gain = (avg_gain * (n - 1) + gains[k]) / n
        avg_loss = (avg_loss * (n - 1) + losses[k]) / n
    if avg_loss == 0.0 and avg_gain == 0.0:
        return 50.0
    if avg_loss == 0.0:
        return 100.0
    return 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)


def brute_williams_r(high: np.ndarray, low: np.ndarray, close: np.ndarray,
                     n: int, t: int) -> float:
    hh = float(np.max(high[t - n + 1: t + 1]))
    ll = float(np.min(low[t - n + 1: t + 1]))
    if hh == ll:
        return -50.0
    return -100.0 * (hh - close[t]) / (hh - ll)


def brute_stochastic_k(high: np.ndarray, low: np.ndarray, close: np.ndarray,
                       n: int, t: int) -> float:
    hh = float(np.max(high[t - n + 1: t + 1]))
    ll = float(np.min(low[t - n + 1: t + 1]))
    if hh == ll:
        return 50.0
    return 100.0 * (close[t] - ll) / (hh - ll)
