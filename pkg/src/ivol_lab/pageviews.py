"""Wikimedia per-article daily pageviews with an offline-first cache.

Fetched spans are recorded in ``cache/<article>/coverage.json`` and the
observations themselves in ``cache/<article>/<year>.csv`` (the counts.csv
schema), so a span served once never touches the network again, even
when the service reported gap days inside it.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import urllib.parse
from datetime import date, timedelta
from pathlib import Path
from typing import Protocol, Sequence

from .data_ingest import CountObservation, load_counts, write_counts
from .errors import FetchError

log = logging.getLogger(__name__)

API_ROOT = "https://wikimedia.org/api/rest_v1/metrics/pageviews/per-article"
USER_AGENT = "ivol-lab/0.1 (research pipeline; batch, throttled)"

_request_lock = threading.Lock()  # politeness: one request in flight at a time


class Transport(Protocol):
    def get(self, url: str, headers: dict[str, str], timeout: float):  # pragma: no cover
        ...


class _RequestsTransport:
    """Default transport; imports requests lazily so tests stay offline."""

    def __init__(self) -> None:
        import requests

        self._session = requests.Session()

    def get(self, url: str, headers: dict[str, str], timeout: float):
        return self._session.get(url, headers=headers, timeout=timeout)


def _article_dir(cache_dir: Path, article: str) -> Path:
    safe = article.replace("/", "_").replace(" ", "_")
    return cache_dir / safe


def _load_coverage(article_dir: Path) -> list[tuple[date, date]]:
    meta = article_dir / "coverage.json"
    if not meta.exists():
        return []
    spans = json.loads(meta.read_text())
    return [(date.fromisoformat(a), date.fromisoformat(b)) for a, b in spans]


def _save_coverage(article_dir: Path, spans: list[tuple[date, date]]) -> None:
    merged: list[tuple[date, date]] = []
    for start, end in sorted(spans):
        if merged and start <= merged[-1][1] + timedelta(days=1):
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    payload = [[a.isoformat(), b.isoformat()] for a, b in merged]
    (article_dir / "coverage.json").write_text(json.dumps(payload))


def _covered(spans: list[tuple[date, date]], start: date, end: date) -> bool:
    cursor = start
    for a, b in sorted(spans):
        if a > cursor:
            return False
        if b >= cursor:
            cursor = b + timedelta(days=1)
        if cursor > end:
            return True
    return cursor > end


def _read_cache(article_dir: Path, start: date, end: date) -> list[CountObservation]:
    out: list[CountObservation] = []
    for year in range(start.year, end.year + 1):
        year_file = article_dir / f"{year}.csv"
        if year_file.exists():
            out.extend(o for o in load_counts(year_file) if start <= o.date <= end)
    return sorted(out, key=lambda o: o.date)


def _merge_into_cache(article_dir: Path, fetched: Sequence[CountObservation]) -> None:
    by_year: dict[int, dict[date, int]] = {}
    for obs in fetched:
        by_year.setdefault(obs.date.year, {})[obs.date] = obs.count
    for year, new in by_year.items():
        year_file = article_dir / f"{year}.csv"
        existing = {o.date: o.count for o in load_counts(year_file)} if year_file.exists() else {}
        existing.update(new)
        rows = [CountObservation(d, c) for d, c in sorted(existing.items())]
        write_counts(year_file, rows)


def _fetch_span(transport: Transport, project: str, article: str,
                start: date, end: date, retries: int, backoff: float,
                politeness_delay: float) -> list[CountObservation]:
    quoted = urllib.parse.quote(article.replace(" ", "_"), safe="")
    url = (f"{API_ROOT}/{project}/all-access/user/{quoted}/daily/"
           f"{start.strftime('%Y%m%d')}00/{end.strftime('%Y%m%d')}00")
    headers = {"User-Agent": USER_AGENT, "Accept": "application/json"}
    last_error: Exception | None = None
    for attempt in range(retries):
        try:
            with _request_lock:
                if politeness_delay > 0 and attempt == 0:
                    time.sleep(politeness_delay)
                response = transport.get(url, headers=headers, timeout=30.0)
            status = getattr(response, "status_code", 0)
            if status == 404:
                raise FetchError(f"unknown article or no data: {article!r}")
            if status != 200:
                raise IOError(f"HTTP {status} from pageviews API")
            payload = response.json()
            items = payload.get("items", [])
            out = []
            for item in items:
                stamp = str(item["timestamp"])
                out.append(CountObservation(
                    date(int(stamp[0:4]), int(stamp[4:6]), int(stamp[6:8])),
                    int(item["views"]),
                ))
            return sorted(out, key=lambda o: o.date)
        except FetchError:
            raise
        except Exception as exc:  # transport hiccups: retry with backoff
            last_error = exc
            if attempt < retries - 1:
                time.sleep(backoff * (2 ** attempt))
    raise FetchError(f"pageviews fetch failed after {retries} attempts: {last_error}")


def fetch_pageviews(
    article: str,
    start: date,
    end: date,
    cache_dir: str | Path,
    transport: Transport | None = None,
    allow_network: bool = True,
    project: str = "en.wikipedia",
    retries: int = 3,
    backoff: float = 0.5,
    politeness_delay: float = 0.0,
) -> list[CountObservation]:
    """Daily views for one article, served from cache when possible.

    Days the service never returned (gaps) are reported via a warning
    and simply absent from the result.
    """
    if end < start:
        raise ValueError(f"end {end} before start {start}")
    article_dir = _article_dir(Path(cache_dir), article)
    article_dir.mkdir(parents=True, exist_ok=True)

    spans = _load_coverage(article_dir)
    if not _covered(spans, start, end):
        if not allow_network:
            raise FetchError(
                f"span {start}..{end} not cached for {article!r} and network disabled"
            )
        if transport is None:
            transport = _RequestsTransport()
        fetched = _fetch_span(transport, project, article, start, end,
                              retries, backoff, politeness_delay)
        _merge_into_cache(article_dir, fetched)
        spans.append((start, end))
        _save_coverage(article_dir, spans)

    observations = _read_cache(article_dir, start, end)
    expected = (end - start).days + 1
    if len(observations) < expected:
        missing = expected - len(observations)
        log.warning("pageviews %s %s..%s: %d gap day(s) reported by the service",
                    article, start, end, missing)
    return observations
