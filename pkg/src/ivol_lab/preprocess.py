"""Per-training-window stationarity, scaling, and feature selection.

Every walk-forward iteration fits its own plan from training rows only:
columns failing an augmented Dickey-Fuller test (constant-only
specification, Schwert lag rule, MacKinnon 5% critical value) are
replaced by first differences, retained columns are scaled to zero mean
and unit variance, and an AdaBoost fit supplies importances from which
the above-average subset is kept. Applying a fitted plan never looks at
the rows it is applied to.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import learners
from .errors import DataError

log = logging.getLogger(__name__)

# MacKinnon (2010) response-surface coefficients for the constant-only
# Dickey-Fuller t distribution: crit = b0 + b1/n + b2/n^2 + b3/n^3.
_MACKINNON_TAU_C = {
    "1%": (-3.43035, -6.5393, -16.786, -79.433),
    "5%": (-2.86154, -2.8903, -4.234, -40.04),
    "10%": (-2.56677, -1.5384, -2.809, 0.0),
}

_ZERO_VAR_TOL = 1e-12


def mackinnon_critical_value(n_obs: int, level: str = "5%") -> float:
    if level not in _MACKINNON_TAU_C:
        raise ValueError(f"level must be one of {sorted(_MACKINNON_TAU_C)}")
    b0, b1, b2, b3 = _MACKINNON_TAU_C[level]
    return b0 + b1 / n_obs + b2 / n_obs**2 + b3 / n_obs**3


def schwert_lag(n: int) -> int:
    """floor(12 * (n/100)^(1/4)), the usual deterministic lag rule."""
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


class AdfResult(NamedTuple):
    statistic: float
    stationary: bool
    critical_value: float
    lag: int


def adf_test(x: Sequence[float] | np.ndarray, max_lag: int | None = None,
             level: str = "5%") -> AdfResult:
    """Unit-root t-test of the level coefficient in the ADF regression.

    Regresses dx_t on a constant, x_{t-1}, and ``max_lag`` lagged
    differences; the series is called stationary when the t-ratio falls
    below the MacKinnon critical value at ``level``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError("adf_test expects a 1-d series")
    n = x.shape[0]
    if max_lag is None:
        max_lag = schwert_lag(n)
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    if n <= max_lag + 10:
        raise DataError(f"series of {n} points too short for lag {max_lag}")
    if np.all(x == x[0]):
        raise DataError("constant series has no unit-root testable variation")

    dx = np.diff(x)
    m = dx.shape[0] - max_lag  # usable regression rows
    rows = np.arange(max_lag, dx.shape[0])
    design = [x[rows]]  # x_{t-1} relative to dx_t
    for k in range(1, max_lag + 1):
        design.append(dx[rows - k])
    design.append(np.ones(m))
    Z = np.column_stack(design)
    target = dx[rows]

    beta, _, rank, _ = np.linalg.lstsq(Z, target, rcond=None)
    resid = target - Z @ beta
    dof = m - Z.shape[1]
    if dof <= 0:
        raise DataError("not enough observations for the ADF regression")
    sigma2 = float(resid @ resid) / dof
    cov = np.linalg.pinv(Z.T @ Z) * sigma2
    se = math.sqrt(max(cov[0, 0], 0.0))
    crit = mackinnon_critical_value(m, level)
    if se == 0.0 or rank < Z.shape[1]:
        # Degenerate fits (exact trends, collinear lags) cannot reject.
        log.warning("adf_test: degenerate regression (rank %d/%d), not rejecting",
                    rank, Z.shape[1])
        return AdfResult(math.nan, False, crit, max_lag)
    stat = float(beta[0]) / se
    return AdfResult(stat, bool(stat < crit), crit, max_lag)


@dataclass(frozen=True)
class PreprocessPlan:
    """Everything fitted on a training window, replayable on test rows."""

    columns: tuple[str, ...]
    differenced_columns: tuple[str, ...] = ()
    scaler_params: dict[str, tuple[float, float]] = field(default_factory=dict)
    selected_columns: tuple[str, ...] = ()

    def to_record(self) -> dict:
        return {
            "differenced": list(self.differenced_columns),
            "scaler": {k: [m, s] for k, (m, s) in self.scaler_params.items()},
            "selected": list(self.selected_columns),
        }


def fit_stationarity(X_train: np.ndarray, columns: Sequence[str],
                     max_lag: int | None = None) -> PreprocessPlan:
    """Mark the training columns that fail the unit-root test."""
    X_train = np.asarray(X_train, dtype=float)
    differenced = []
    for j, name in enumerate(columns):
        col = X_train[:, j]
        if float(np.std(col)) <= _ZERO_VAR_TOL:
            continue  # constant columns are left for the zero-variance drop
        if not adf_test(col, max_lag=max_lag).stationary:
            differenced.append(name)
    return PreprocessPlan(tuple(columns), tuple(differenced))


def apply_stationarity(X: np.ndarray, columns: Sequence[str],
                       plan: PreprocessPlan) -> np.ndarray:
    """First-difference the planned columns; the first row is dropped."""
    X = np.asarray(X, dtype=float)
    if tuple(columns) != plan.columns:
        raise DataError("plan fitted on different columns")
    out = X[1:].copy()
    targets = set(plan.differenced_columns)
    for j, name in enumerate(columns):
        if name in targets:
            out[:, j] = X[1:, j] - X[:-1, j]
    return out


def fit_scaler(X_train: np.ndarray, columns: Sequence[str],
               plan: PreprocessPlan) -> PreprocessPlan:
    """Record per-column mean and population std; constants are dropped."""
    X_train = np.asarray(X_train, dtype=float)
    params: dict[str, tuple[float, float]] = {}
    dropped = []
    for j, name in enumerate(columns):
        mean = float(np.mean(X_train[:, j]))
        std = float(np.std(X_train[:, j]))
        if std <= _ZERO_VAR_TOL:
            dropped.append(name)
            continue
        params[name] = (mean, std)
    if dropped:
        log.warning("standardize: dropping %d zero-variance columns", len(dropped))
    return replace(plan, scaler_params=params)


def standardize(X: np.ndarray, columns: Sequence[str],
                plan: PreprocessPlan) -> tuple[np.ndarray, tuple[str, ...]]:
    """Scale with training parameters, keeping only retained columns."""
    X = np.asarray(X, dtype=float)
    if not plan.scaler_params:
        raise DataError("plan has no fitted scaler")
    index = {name: j for j, name in enumerate(columns)}
    kept = [name for name in columns if name in plan.scaler_params]
    out = np.empty((X.shape[0], len(kept)))
    for i, name in enumerate(kept):
        mean, std = plan.scaler_params[name]
        out[:, i] = (X[:, index[name]] - mean) / std
    return out, tuple(kept)


def select_features(train_X: np.ndarray, train_y: np.ndarray,
                    columns: Sequence[str], seed: int = 0,
                    n_rounds: int = 50) -> tuple[str, ...]:
    """Keep columns whose AdaBoost importance exceeds the 1/d average."""
    train_set = learners.TrainSet(train_X, train_y)
    model = learners.fit_adaboost(train_set, n_rounds=n_rounds, seed=seed)
    if not model.stumps:
        log.warning("select_features: no usable split, keeping all columns")
        return tuple(columns)
    importances = learners.feature_importances(model)
    threshold = 1.0 / len(columns)
    kept = tuple(name for j, name in enumerate(columns) if importances[j] > threshold)
    if not kept:
        # All importances tied at exactly 1/d; keep the deterministic argmax.
        kept = (columns[int(np.argmax(importances))],)
    return kept
