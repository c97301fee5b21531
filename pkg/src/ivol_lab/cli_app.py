"""Command-line entry point wiring the pipeline stages.

Subcommands: compute-ivol, fetch-wiki, build-features, run, report.
Options may come from flags or a JSON config file (flags win). Every
output file starts with comment lines recording the tool version, the
exact configuration, and its hash, so a run is reproducible from its
own artifacts. Nothing depends on the clock: identical config and
inputs give byte-identical outputs.

Exit codes: 0 success, 2 usage, 3 missing input file, 4 input schema
violation, 5 any other pipeline error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Any, Sequence

from . import __version__, pageviews
from .data_ingest import (
    TradingCalendar,
    align_to_calendar,
    bar_series,
    load_bars,
    load_counts,
    load_options,
    write_counts,
)
from .errors import IvolLabError, SchemaError
from .feature_factory import build_feature_matrix, load_features_csv, write_features_csv
from .ivol_engine import daily_ivol_series, load_ivol_csv, load_rates_csv, write_ivol_csv
from .walkforward_eval import (
    MODEL_KINDS,
    format_report_table,
    load_report_csv,
    run_ablation,
    write_predictions_csv,
    write_report_csv,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_SCHEMA = 4
EXIT_PIPELINE = 5

CACHE_ENV = "IVOL_LAB_CACHE"


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved options of one subcommand invocation."""

    command: str
    options: dict[str, Any]

    def hash(self) -> str:
        payload = json.dumps({"command": self.command, **self.options},
                             sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def header_lines(self) -> list[str]:
        config_json = json.dumps({"command": self.command, **self.options},
                                 sort_keys=True)
        return [
            f"ivol-lab {__version__}",
            f"config {config_json}",
            f"config_hash={self.hash()}",
        ]


def _merge_config(args: argparse.Namespace, defaults: dict[str, Any]) -> RunConfig:
    """defaults < config file < explicit flags."""
    values = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON config ({exc})") from None
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise SchemaError(f"{path}: unknown config keys {sorted(unknown)}")
        values.update(loaded)
    for key in defaults:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            values[key] = flag_value
    missing = [k for k, v in values.items() if v is None]
    if missing:
        raise SchemaError(f"missing required option(s): --{', --'.join(missing)}")
    return RunConfig(args.command, values)


def _parse_date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise SchemaError(f"bad date {text!r}, expected YYYY-MM-DD") from None


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def _str_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


# ---------------------------------------------------------------------------
# Subcommands


def cmd_compute_ivol(cfg: RunConfig) -> int:
    opts = cfg.options
    bars = load_bars(opts["bars"])
    calendar = TradingCalendar.from_bars(bars)
    quotes = load_options(opts["options"])
    rate_by_date = load_rates_csv(opts["rates"]) if opts.get("rates") else None
    points = daily_ivol_series(
        quotes,
        calendar,
        target_days=int(opts["target_days"]),
        rate=float(opts["rate"]),
        rate_by_date=rate_by_date,
        min_near_days=int(opts["min_near_days"]),
        clamp=bool(opts["clamp"]),
        method=opts["interp"],
    )
    write_ivol_csv(opts["out"], points, cfg.header_lines())
    print(f"wrote {len(points)} ivol points to {opts['out']}")
    return EXIT_OK


def cmd_fetch_wiki(cfg: RunConfig) -> int:
    opts = cfg.options
    observations = pageviews.fetch_pageviews(
        opts["article"],
        _parse_date(opts["start"]),
        _parse_date(opts["end"]),
        cache_dir=opts["cache"],
        allow_network=not bool(opts["offline"]),
        project=opts["project"],
    )
    write_counts(opts["out"], observations, cfg.header_lines())
    print(f"wrote {len(observations)} observations to {opts['out']}")
    return EXIT_OK


def cmd_build_features(cfg: RunConfig) -> int:
    opts = cfg.options
    bars = load_bars(opts["bars"])
    calendar = TradingCalendar.from_bars(bars)
    policy = opts["align_policy"]
    ivol = load_ivol_csv(opts["ivol"])
    if ivol.dates != calendar.days:
        raise SchemaError("ivol.csv dates do not match the bars trading calendar")
    series = {name: bar_series(bars, name) for name in
              ("open", "high", "low", "close", "volume")}
    series["ivol"] = ivol
    series["news"] = align_to_calendar(load_counts(opts["news"]), calendar,
                                       policy, name="news")
    series["pageviews"] = align_to_calendar(load_counts(opts["wiki"]), calendar,
                                            policy, name="pageviews")
    matrix = build_feature_matrix(series)
    write_features_csv(opts["out"], matrix, cfg.header_lines())
    print(f"wrote {matrix.n_rows} rows x {matrix.n_columns} features to {opts['out']}")
    return EXIT_OK


def _jsonl_sink(path: Path, first_record: dict):
    fh = path.open("w")
    fh.write(json.dumps(first_record) + "\n")

    def sink(record: dict) -> None:
        fh.write(json.dumps(record) + "\n")

    return sink, fh


def cmd_run(cfg: RunConfig) -> int:
    opts = cfg.options
    matrix = load_features_csv(opts["features"])
    sinks = []
    plan_sink = model_sink = None
    if opts.get("dump_plans"):
        plan_sink, fh = _jsonl_sink(Path(opts["dump_plans"]),
                                    {"format": "ivol-lab-plan-dump", "version": 1})
        sinks.append(fh)
    if opts.get("dump_models"):
        model_sink, fh = _jsonl_sink(Path(opts["dump_models"]),
                                     {"format": "ivol-lab-model-dump", "version": 1})
        sinks.append(fh)
    try:
        report = run_ablation(
            matrix,
            scenario_ids=opts["scenarios"],
            model_kinds=opts["models"],
            window=int(opts["window"]),
            seed=int(opts["seed"]),
            plan_sink=plan_sink,
            model_sink=model_sink,
        )
    finally:
        for fh in sinks:
            fh.close()
    write_report_csv(opts["out"], report, cfg.header_lines())
    write_predictions_csv(opts["predictions_out"], report, cfg.header_lines())
    print(f"wrote {len(report.cells)} cells over {report.n_splits} splits "
          f"to {opts['out']}")
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    rows = load_report_csv(cfg.options["in_path"])
    path = Path(cfg.options["in_path"])
    for raw in path.read_text().splitlines():
        if raw.startswith("# test class distribution"):
            print(raw.lstrip("# "))
    print(format_report_table(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


def _add_config_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with option defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivol-lab",
        description="Implied-volatility movement prediction pipeline",
    )
    parser.add_argument("--version", action="version", version=f"ivol-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute-ivol", help="option chain -> daily ivol series")
    _add_config_flag(p)
    p.add_argument("--options", help="options.csv path")
    p.add_argument("--bars", help="bars.csv path (defines the trading calendar)")
    p.add_argument("--target-days", dest="target_days", type=int)
    p.add_argument("--rate", type=float)
    p.add_argument("--rates", help="optional rates.csv (date,rate)")
    p.add_argument("--min-near-days", dest="min_near_days", type=int)
    p.add_argument("--clamp", action="store_const", const=True, default=None,
                   help="fall back to the nearest term outside the expiry range")
    p.add_argument("--interp", choices=("variance", "volatility"))
    p.add_argument("--out")

    p = sub.add_parser("fetch-wiki", help="download daily pageviews with caching")
    _add_config_flag(p)
    p.add_argument("--article")
    p.add_argument("--start")
    p.add_argument("--end")
    p.add_argument("--cache")
    p.add_argument("--project")
    p.add_argument("--offline", action="store_const", const=True, default=None)
    p.add_argument("--out")

    p = sub.add_parser("build-features", help="assemble the feature matrix")
    _add_config_flag(p)
    p.add_argument("--ivol")
    p.add_argument("--bars")
    p.add_argument("--news")
    p.add_argument("--wiki")
    p.add_argument("--align-policy", dest="align_policy",
                   choices=("drop", "sum_into_next", "carry_forward"))
    p.add_argument("--out")

    p = sub.add_parser("run", help="walk-forward ablation experiments")
    _add_config_flag(p)
    p.add_argument("--features")
    p.add_argument("--window", type=int)
    p.add_argument("--scenarios", type=_int_list)
    p.add_argument("--models", type=_str_list)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--predictions-out", dest="predictions_out")
    p.add_argument("--dump-plans", dest="dump_plans")
    p.add_argument("--dump-models", dest="dump_models")

    p = sub.add_parser("report", help="print a report.csv as an aligned table")
    _add_config_flag(p)
    p.add_argument("--in", dest="in_path")
    return parser


_DEFAULTS: dict[str, dict[str, Any]] = {
    "compute-ivol": {
        "options": None, "bars": None, "out": None, "target_days": 30,
        "rate": 0.01, "rates": "", "min_near_days": 7, "clamp": False,
        "interp": "variance",
    },
    "fetch-wiki": {
        "article": None, "start": None, "end": None, "out": None,
        "cache": None, "project": "en.wikipedia", "offline": False,
    },
    "build-features": {
        "ivol": None, "bars": None, "news": None, "wiki": None, "out": None,
        "align_policy": "drop",
    },
    "run": {
        "features": None, "out": None, "predictions_out": None,
        "window": 379, "scenarios": [1, 2, 3, 4, 5],
        "models": list(MODEL_KINDS), "seed": 42,
        "dump_plans": "", "dump_models": "",
    },
    "report": {"in_path": None},
}

_HANDLERS = {
    "compute-ivol": cmd_compute_ivol,
    "fetch-wiki": cmd_fetch_wiki,
    "build-features": cmd_build_features,
    "run": cmd_run,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("IVOL_LAB_LOGLEVEL", "WARNING"),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    defaults = dict(_DEFAULTS[args.command])
    if args.command == "fetch-wiki" and defaults["cache"] is None:
        defaults["cache"] = os.environ.get(CACHE_ENV, "cache")
    if args.command == "run" and defaults["predictions_out"] is None:
        defaults["predictions_out"] = "predictions.csv"
    try:
        cfg = _merge_config(args, defaults)
        return _HANDLERS[args.command](cfg)
    except FileNotFoundError as exc:
        print(f"ivol-lab: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except SchemaError as exc:
        print(f"ivol-lab: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except IvolLabError as exc:
        print(f"ivol-lab: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    raise SystemExit(main())
