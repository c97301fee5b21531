"""Walk-forward evaluation of the ablation grid.

A sliding window of ``window`` rows trains, the following row tests,
and the window advances one day, giving usable_days - window splits.
Each (scenario, model) cell is scored on the identical split plan with
balanced accuracy, the mean of per-class recalls. All per-window
fitting (stationarity, scaling, selection, the model itself) derives
exclusively from training rows; mutating a test row can never change a
fitted artifact.

Gradient and kernel models consume the standardized, importance-
selected columns; the boosting model takes the full masked feature set
after the stationarity transform only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import learners, preprocess
from .errors import DataError
from .feature_factory import FeatureMatrix

log = logging.getLogger(__name__)

MODEL_KINDS = ("logistic", "svm", "adaboost")

SCENARIO_SOURCES: dict[int, frozenset[str]] = {
    1: frozenset({"market", "option"}),
    2: frozenset({"news", "wikipedia"}),
    3: frozenset({"market", "option", "wikipedia"}),
    4: frozenset({"market", "option", "news"}),
    5: frozenset({"market", "option", "news", "wikipedia"}),
}

REPORT_HEADER = ("scenario", "model", "balanced_accuracy",
                 "tp", "fp", "tn", "fn", "n_skipped")
PREDICTIONS_HEADER = ("scenario", "model", "date", "prob_up", "pred", "label")


class Split(NamedTuple):
    train_start: int
    train_stop: int  # exclusive
    test_index: int


@dataclass(frozen=True)
class SplitPlan:
    window: int
    n_days: int
    splits: tuple[Split, ...]

    def __post_init__(self) -> None:
        if len(self.splits) != self.n_days - self.window:
            raise DataError("split count does not equal usable_days - window")
        for k, s in enumerate(self.splits):
            if s.train_stop - s.train_start != self.window or s.test_index != s.train_stop:
                raise DataError(f"malformed split {s}")
            if k and s.train_start != self.splits[k - 1].train_start + 1:
                raise DataError("consecutive splits must shift by exactly one day")


def make_splits(usable_days: int, window: int) -> SplitPlan:
    """All sliding train windows with their single next-day test index."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if usable_days <= window:
        raise DataError(
            f"need more than window={window} usable days, got {usable_days}"
        )
    splits = tuple(
        Split(i, i + window, i + window) for i in range(usable_days - window)
    )
    return SplitPlan(window, usable_days, splits)


@dataclass(frozen=True)
class ScenarioSpec:
    id: int
    sources: frozenset[str]


def scenario(scenario_id: int) -> ScenarioSpec:
    if scenario_id not in SCENARIO_SOURCES:
        raise ValueError(f"scenario must be 1..5, got {scenario_id}")
    return ScenarioSpec(scenario_id, SCENARIO_SOURCES[scenario_id])


@dataclass(frozen=True)
class PredictionRecord:
    scenario_id: int
    model: str
    date: date
    prob_up: float
    pred: int
    label: int


@dataclass(frozen=True)
class SkippedIteration:
    scenario_id: int
    model: str
    date: date
    reason: str


def balanced_accuracy(predictions: Sequence[int] | np.ndarray,
                      labels: Sequence[int] | np.ndarray) -> float:
    """Mean of up-recall and down-recall."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise DataError("predictions and labels differ in length")
    up = labels == 1
    down = labels == 0
    if not up.any() or not down.any():
        raise DataError("labels contain a single class, balanced accuracy undefined")
    recall_up = float(np.mean(predictions[up] == 1))
    recall_down = float(np.mean(predictions[down] == 0))
    return 0.5 * (recall_up + recall_down)


# ---------------------------------------------------------------------------
# Per-window pipeline


@dataclass(frozen=True)
class _Window:
    """Stationarity-transformed window: train rows then the test row."""

    X_train: np.ndarray
    x_test: np.ndarray
    y_train: np.ndarray
    label: int
    columns: tuple[str, ...]
    plan: preprocess.PreprocessPlan


def _prepare_window(masked: FeatureMatrix, split: Split) -> _Window:
    X = masked.X
    y = masked.target
    train = slice(split.train_start, split.train_stop)
    plan = preprocess.fit_stationarity(X[train], masked.columns)
    window = X[split.train_start: split.test_index + 1]
    transformed = preprocess.apply_stationarity(window, masked.columns, plan)
    X_train = transformed[:-1]
    x_test = transformed[-1]
    y_train = y[split.train_start + 1: split.train_stop]
    if np.unique(y_train).size < 2:
        raise DataError("single-class training window")
    return _Window(X_train, x_test, y_train, int(y[split.test_index]),
                   masked.columns, plan)


@dataclass(frozen=True)
class _Selected:
    """Standardized and importance-filtered view for linear/kernel models."""

    X_train: np.ndarray
    x_test: np.ndarray
    plan: preprocess.PreprocessPlan


def _prepare_selected(window: _Window, seed: int) -> _Selected:
    plan = preprocess.fit_scaler(window.X_train, window.columns, window.plan)
    X_std, kept = preprocess.standardize(window.X_train, window.columns, plan)
    x_std, _ = preprocess.standardize(window.x_test[None, :], window.columns, plan)
    selected = preprocess.select_features(X_std, window.y_train, kept, seed=seed)
    plan = preprocess.PreprocessPlan(
        plan.columns, plan.differenced_columns, plan.scaler_params, selected
    )
    idx = [kept.index(name) for name in selected]
    return _Selected(X_std[:, idx], x_std[0, idx], plan)


def _fit_and_predict(model_kind: str, window: _Window, selected: _Selected | None,
                     seed: int) -> tuple[float, learners.FittedModel]:
    if model_kind == "adaboost":
        train = learners.TrainSet(window.X_train, window.y_train)
        model = learners.fit_adaboost(train, seed=seed, **learners.ADABOOST_DEFAULTS)
        prob = float(learners.predict_proba(model, window.x_test)[0])
        return prob, model
    assert selected is not None
    train = learners.TrainSet(selected.X_train, window.y_train)
    if model_kind == "logistic":
        model = learners.fit_logistic(train, seed=seed, **learners.LOGISTIC_DEFAULTS)
    elif model_kind == "svm":
        model = learners.fit_svm_rbf(train, seed=seed, **learners.SVM_DEFAULTS)
    else:
        raise ValueError(f"unknown model kind {model_kind!r}")
    prob = float(learners.predict_proba(model, selected.x_test)[0])
    return prob, model


def run_iteration(split: Split, matrix: FeatureMatrix, spec: ScenarioSpec,
                  model_kind: str, seed: int) -> PredictionRecord | SkippedIteration:
    """One train/test step of one cell; see the module pipeline contract."""
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    masked = matrix.mask_sources(spec.sources)
    test_date = matrix.dates[split.test_index]
    try:
        window = _prepare_window(masked, split)
        selected = None if model_kind == "adaboost" else _prepare_selected(window, seed)
    except DataError as exc:
        return SkippedIteration(spec.id, model_kind, test_date, str(exc))
    prob, _ = _fit_and_predict(model_kind, window, selected, seed)
    return PredictionRecord(spec.id, model_kind, test_date, prob,
                            int(prob > 0.5), window.label)


# ---------------------------------------------------------------------------
# Ablation orchestration


@dataclass(frozen=True)
class CellResult:
    scenario_id: int
    model: str
    balanced_accuracy: float | None
    tp: int
    fp: int
    tn: int
    fn: int
    n_skipped: int
    records: tuple[PredictionRecord, ...]
    skipped: tuple[SkippedIteration, ...]


@dataclass(frozen=True)
class ExperimentReport:
    window: int
    seed: int
    n_splits: int
    down_share: float
    up_share: float
    cells: tuple[CellResult, ...]

    def cell(self, scenario_id: int, model: str) -> CellResult:
        for c in self.cells:
            if c.scenario_id == scenario_id and c.model == model:
                return c
        raise KeyError((scenario_id, model))


def _summarize_cell(spec: ScenarioSpec, model_kind: str,
                    records: list[PredictionRecord],
                    skipped: list[SkippedIteration]) -> CellResult:
    preds = np.array([r.pred for r in records], dtype=int)
    labels = np.array([r.label for r in records], dtype=int)
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    tn = int(np.sum((preds == 0) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    try:
        ba = balanced_accuracy(preds, labels) if records else None
    except DataError as exc:
        log.warning("scenario %d %s: %s", spec.id, model_kind, exc)
        ba = None
    return CellResult(spec.id, model_kind, ba, tp, fp, tn, fn,
                      len(skipped), tuple(records), tuple(skipped))


def run_ablation(
    matrix: FeatureMatrix,
    scenario_ids: Sequence[int] = (1, 2, 3, 4, 5),
    model_kinds: Sequence[str] = MODEL_KINDS,
    window: int = 379,
    seed: int = 42,
    plan_sink: Callable[[dict], None] | None = None,
    model_sink: Callable[[dict], None] | None = None,
) -> ExperimentReport:
    """Evaluate every (scenario, model) cell on one shared split plan.

    Per-window transforms are computed once per scenario and reused
    across models (they depend only on the masked training rows), which
    is observationally identical to running each cell independently.
    """
    for kind in model_kinds:
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
    plan = make_splits(matrix.n_rows, window)
    test_labels = matrix.target[[s.test_index for s in plan.splits]]
    down = float(np.mean(test_labels == 0))

    needs_selected = any(k != "adaboost" for k in model_kinds)
    cells: list[CellResult] = []
    Bucket = tuple[list[PredictionRecord], list[SkippedIteration]]
    collect: dict[tuple[int, str], Bucket] = {}
    for sid in scenario_ids:
        spec = scenario(sid)
        masked = matrix.mask_sources(spec.sources)
        for kind in model_kinds:
            collect[(sid, kind)] = ([], [])
        for k, split in enumerate(plan.splits):
            test_date = matrix.dates[split.test_index]
            try:
                win = _prepare_window(masked, split)
                sel = _prepare_selected(win, seed) if needs_selected else None
            except DataError as exc:
                for kind in model_kinds:
                    collect[(sid, kind)][1].append(
                        SkippedIteration(sid, kind, test_date, str(exc))
                    )
                continue
            if plan_sink is not None:
                record = (sel.plan if sel is not None else win.plan).to_record()
                plan_sink({"scenario": sid, "iteration": k,
                           "date": test_date.isoformat(), **record})
            for kind in model_kinds:
                prob, model = _fit_and_predict(
                    kind, win, sel if kind != "adaboost" else None, seed
                )
                collect[(sid, kind)][0].append(
                    PredictionRecord(sid, kind, test_date, prob,
                                     int(prob > 0.5), win.label)
                )
                if model_sink is not None:
                    model_sink({"scenario": sid, "iteration": k, "model": kind,
                                **_model_record(model)})
        for kind in model_kinds:
            records, skipped = collect[(sid, kind)]
            cells.append(_summarize_cell(spec, kind, records, skipped))
    return ExperimentReport(window, seed, len(plan.splits), down, 1.0 - down,
                            tuple(cells))


def _model_record(model: learners.FittedModel) -> dict:
    if isinstance(model, learners.LogisticModel):
        return {"weights": model.weights.tolist(), "bias": model.bias,
                "converged": model.converged}
    if isinstance(model, learners.SvmRbfModel):
        return {"n_support": int(model.support_vectors.shape[0]),
                "bias": model.bias, "gamma": model.gamma,
                "platt": [model.platt_a, model.platt_b],
                "converged": model.converged}
    return {"stumps": [[s.feature, s.threshold, s.polarity, s.alpha]
                       for s in model.stumps]}


# ---------------------------------------------------------------------------
# Report serialization


def write_report_csv(path: str | Path, report: ExperimentReport,
                     header_lines: Sequence[str] = ()) -> None:
    with Path(path).open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"# test class distribution: down={report.down_share:.4f} "
                 f"up={report.up_share:.4f} over {report.n_splits} splits\n")
        fh.write(",".join(REPORT_HEADER) + "\n")
        for c in report.cells:
            ba = "" if c.balanced_accuracy is None else f"{c.balanced_accuracy:.6f}"
            fh.write(f"{c.scenario_id},{c.model},{ba},{c.tp},{c.fp},{c.tn},"
                     f"{c.fn},{c.n_skipped}\n")


def write_predictions_csv(path: str | Path, report: ExperimentReport,
                          header_lines: Sequence[str] = ()) -> None:
    with Path(path).open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(PREDICTIONS_HEADER) + "\n")
        for c in report.cells:
            for r in c.records:
                fh.write(f"{r.scenario_id},{r.model},{r.date.isoformat()},"
                         f"{r.prob_up:.6f},{r.pred},{r.label}\n")


def load_report_csv(path: str | Path) -> list[dict]:
    """Rows of report.csv as dicts (used by the report subcommand)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    rows: list[dict] = []
    header: list[str] | None = None
    with path.open() as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split(",")
            if header is None:
                if tuple(fields) != REPORT_HEADER:
                    raise DataError(f"{path}: unexpected report header {fields!r}")
                header = fields
                continue
            rows.append(dict(zip(header, fields)))
    if header is None:
        raise DataError(f"{path}: empty report")
    return rows


def format_report_table(rows: list[dict]) -> str:
    """Scenario-by-model balanced-accuracy table, one row per scenario."""
    models = []
    for row in rows:
        if row["model"] not in models:
            models.append(row["model"])
    scenarios = sorted({int(row["scenario"]) for row in rows})
    by_key = {(int(r["scenario"]), r["model"]): r for r in rows}
    width = max(10, *(len(m) for m in models)) + 2
    lines = ["Scenario" + "".join(m.rjust(width) for m in models)]
    for sid in scenarios:
        cells = []
        for m in models:
            row = by_key.get((sid, m))
            if row is None or not row["balanced_accuracy"]:
                cells.append("-".rjust(width))
            else:
                cells.append(f"{float(row['balanced_accuracy']) * 100:.1f}%".rjust(width))
        lines.append(f"{sid:<8}" + "".join(cells))
    return "\n".join(lines)
