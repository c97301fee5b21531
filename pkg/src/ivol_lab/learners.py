"""From-first-principles binary classifiers with probability outputs.

Three model families, all deterministic for a fixed seed and input:

* L2-regularized logistic regression, fit by damped Newton steps with an
  Armijo line search (the objective is strictly convex, so the optimum
  is unique and the loss decreases at every accepted step).
* Soft-margin RBF-kernel SVM, fit by sequential pairwise optimization of
  the dual with maximal-violating-pair working-set selection, plus a
  two-parameter sigmoid calibrated on training decision values.
* Discrete AdaBoost over depth-1 stumps with exhaustive threshold
  search; stage weights use ln((1-err)/err) and per-feature importances
  are the normalized sums of absolute stage weights.

Labels are {0, 1}; internally the margin-based models use {-1, +1}.
Ties at probability 0.5 resolve to label 0 (a non-move counts as down).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

LOGISTIC_DEFAULTS = {"reg_strength": 1.0, "tol": 1e-4, "max_iter": 1000}
SVM_DEFAULTS = {"C": 1.0, "gamma": "auto", "tol": 1e-3}
ADABOOST_DEFAULTS = {"n_rounds": 50, "learning_rate": 1.0}


@dataclass(frozen=True)
class TrainSet:
    """Temporally ordered training rows with binary labels."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        X = np.ascontiguousarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DataError("train set shape mismatch")
        if not np.all(np.isfinite(X)):
            raise DataError("train set contains non-finite features")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0/1")
        if np.unique(y).size < 2:
            raise DataError("training window contains a single class")

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


def sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    return np.where(np.asarray(z) >= 0,
                    1.0 / (1.0 + np.exp(-np.clip(z, -500, None))),
                    np.exp(np.clip(z, None, 500))
                    / (1.0 + np.exp(np.clip(z, None, 500))))


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    bias: float
    reg_strength: float
    converged: bool
    n_iter: int
    seed: int = 0

    kind = "logistic"

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias


def logistic_loss(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float,
                  reg: float) -> float:
    """Sum negative log-likelihood plus (reg/2)||w||^2 (bias unpenalized)."""
    z = X @ w + b
    # log(1 + e^z) - y z, computed stably
    nll = float(np.sum(np.maximum(z, 0) - y * z + np.log1p(np.exp(-np.abs(z)))))
    return nll + 0.5 * reg * float(w @ w)


def logistic_gradient(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float,
                      reg: float) -> tuple[np.ndarray, float]:
    p = sigmoid(X @ w + b)
    return X.T @ (p - y) + reg * w, float(np.sum(p - y))


def fit_logistic(train: TrainSet, reg_strength: float = 1.0, tol: float = 1e-4,
                 max_iter: int = 1000, seed: int = 0) -> LogisticModel:
    """Newton iterations with backtracking until the gradient norm < tol."""
    if reg_strength < 0:
        raise ValueError("regularization strength must be non-negative")
    X, y = train.X, train.y
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    converged = False
    it = 0
    loss = logistic_loss(X, y, w, b, reg_strength)
    for it in range(1, max_iter + 1):
        gw, gb = logistic_gradient(X, y, w, b, reg_strength)
        gnorm = math.sqrt(float(gw @ gw) + gb * gb)
        if gnorm < tol:
            converged = True
            break
        p = sigmoid(X @ w + b)
        r = np.maximum(p * (1.0 - p), 1e-12)
        Xa = np.hstack([X, np.ones((n, 1))])
        H = (Xa * r[:, None]).T @ Xa
        H[:d, :d] += reg_strength * np.eye(d)
        H[np.diag_indices_from(H)] += 1e-10  # keep the solve well posed
        g = np.concatenate([gw, [gb]])
        step = np.linalg.solve(H, -g)
        # Armijo backtracking on the Newton direction keeps the loss monotone.
        t = 1.0
        slope = float(g @ step)
        for _ in range(60):
            w_new = w + t * step[:d]
            b_new = b + t * step[d]
            loss_new = logistic_loss(X, y, w_new, b_new, reg_strength)
            if loss_new <= loss + 1e-4 * t * slope:
                break
            t *= 0.5
        w, b, loss = w_new, b_new, loss_new
    else:
        it = max_iter
    if not converged:
        gw, gb = logistic_gradient(X, y, w, b, reg_strength)
        gnorm = math.sqrt(float(gw @ gw) + gb * gb)
        if gnorm < tol:
            converged = True
        else:
            log.warning("logistic fit stopped at %d iterations, |grad|=%.3e",
                        it, gnorm)
    return LogisticModel(w, b, reg_strength, converged, it, seed)


# ---------------------------------------------------------------------------
# RBF-kernel SVM via sequential pairwise optimization


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def resolve_gamma(X: np.ndarray, gamma: float | str) -> float:
    """'auto' follows the 1/(d * Var(X)) convention on the flattened matrix."""
    if gamma == "auto":
        var = float(np.var(X))
        if var <= 0:
            var = 1.0
        return 1.0 / (X.shape[1] * var)
    value = float(gamma)
    if value <= 0:
        raise ValueError("gamma must be positive")
    return value


@dataclass(frozen=True)
class SvmRbfModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * s_i for support vectors
    bias: float
    gamma: float
    C: float
    platt_a: float
    platt_b: float
    converged: bool
    n_iter: int
    alpha: np.ndarray  # full dual vector, kept for audits
    seed: int = 0

    kind = "svm"

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        if self.support_vectors.shape[0] == 0:
            return np.full(X.shape[0], self.bias)
        K = rbf_kernel(X, self.support_vectors, self.gamma)
        return K @ self.dual_coef + self.bias


def svm_dual_objective(alpha: np.ndarray, K: np.ndarray, signs: np.ndarray) -> float:
    """Soft-margin dual value sum(alpha) - 1/2 a'Qa with Q = ss' * K."""
    v = alpha * signs
    return float(np.sum(alpha) - 0.5 * v @ K @ v)


def _fit_platt(scores: np.ndarray, y: np.ndarray, max_iter: int = 100) -> tuple[float, float]:
    """Two-parameter sigmoid fit on decision values (regularized targets)."""
    n_pos = float(np.sum(y == 1))
    n_neg = float(np.sum(y == 0))
    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    t = np.where(y == 1, hi, lo)
    a, b = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))
    eps = 1e-12

    def objective(a_: float, b_: float) -> float:
        z = a_ * scores + b_
        # cross-entropy of t against sigmoid(-z), computed stably
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-z)),
                                     (t - 1) * z + np.log1p(np.exp(z)))))

    f = objective(a, b)
    for _ in range(max_iter):
        z = a * scores + b
        p = sigmoid(-z)
        d1 = t - p  # dF/dz per point
        g_a = float(np.sum(d1 * scores))
        g_b = float(np.sum(d1))
        if abs(g_a) < 1e-5 and abs(g_b) < 1e-5:
            break
        w = np.maximum(p * (1 - p), eps)
        h_aa = float(np.sum(w * scores * scores)) + eps
        h_ab = float(np.sum(w * scores))
        h_bb = float(np.sum(w)) + eps
        det = h_aa * h_bb - h_ab * h_ab
        if det <= 0:
            break
        da = -(h_bb * g_a - h_ab * g_b) / det
        db = -(-h_ab * g_a + h_aa * g_b) / det
        step = 1.0
        while step > 1e-10:
            a_new, b_new = a + step * da, b + step * db
            f_new = objective(a_new, b_new)
            if f_new < f + 1e-4 * step * (g_a * da + g_b * db):
                a, b, f = a_new, b_new, f_new
                break
            step *= 0.5
        else:
            break
    return a, b


def fit_svm_rbf(train: TrainSet, C: float = 1.0, gamma: float | str = "auto",
                tol: float = 1e-3, max_iter: int = 200_000,
                seed: int = 0) -> SvmRbfModel:
    """Solve the soft-margin dual by maximal-violating-pair updates."""
    if C <= 0:
        raise ValueError("C must be positive")
    X, y = train.X, train.y
    n = X.shape[0]
    g = resolve_gamma(X, gamma)
    s = np.where(y == 1, 1.0, -1.0)
    K = rbf_kernel(X, X, g)

    alpha = np.zeros(n)
    f = np.zeros(n)  # sum_j alpha_j s_j K_ij, maintained incrementally
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        v = s - f  # derivative of the dual along each coordinate's feasible move
        up = ((s > 0) & (alpha < C)) | ((s < 0) & (alpha > 0))
        low = ((s < 0) & (alpha < C)) | ((s > 0) & (alpha > 0))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.flatnonzero(up)[np.argmax(v[up])])
        j = int(np.flatnonzero(low)[np.argmin(v[low])])
        gap = v[i] - v[j]
        if gap < tol:
            converged = True
            break
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        t_star = gap / max(eta, 1e-12)
        t_max_i = (C - alpha[i]) if s[i] > 0 else alpha[i]
        t_max_j = alpha[j] if s[j] > 0 else (C - alpha[j])
        t = min(t_star, t_max_i, t_max_j)
        if t <= 0:
            converged = True
            break
        alpha[i] += s[i] * t
        alpha[j] -= s[j] * t
        f += t * (K[:, i] - K[:, j])
    if not converged:
        log.warning("svm fit hit the %d pair-update cap", max_iter)

    v = s - f
    free = (alpha > 1e-12) & (alpha < C - 1e-12)
    if free.any():
        bias = float(np.mean(v[free]))
    else:
        up = ((s > 0) & (alpha < C)) | ((s < 0) & (alpha > 0))
        low = ((s < 0) & (alpha < C)) | ((s > 0) & (alpha > 0))
        hi = np.max(v[up]) if up.any() else 0.0
        lo = np.min(v[low]) if low.any() else 0.0
        bias = float(0.5 * (hi + lo))

    sv = alpha > 1e-12
    scores = f + bias
    platt_a, platt_b = _fit_platt(scores, y)
    return SvmRbfModel(
        support_vectors=X[sv].copy(),
        dual_coef=(alpha * s)[sv],
        bias=bias,
        gamma=g,
        C=C,
        platt_a=platt_a,
        platt_b=platt_b,
        converged=converged,
        n_iter=it,
        alpha=alpha,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Discrete AdaBoost over decision stumps


@dataclass(frozen=True)
class Stump:
    """Depth-1 rule: polarity +1 predicts up above the threshold."""

    feature: int
    threshold: float
    polarity: int
    alpha: float

    def predict_signs(self, X: np.ndarray) -> np.ndarray:
        above = X[:, self.feature] > self.threshold
        return np.where(above, float(self.polarity), float(-self.polarity))


@dataclass(frozen=True)
class AdaBoostModel:
    stumps: tuple[Stump, ...]
    n_features: int
    stage_errors: tuple[float, ...]
    seed: int = 0

    kind = "adaboost"

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        score = np.zeros(X.shape[0])
        for stump in self.stumps:
            score += stump.alpha * stump.predict_signs(X)
        return score


def _best_stump(X: np.ndarray, signs: np.ndarray, w: np.ndarray,
                order: np.ndarray, valid: np.ndarray,
                thresholds: np.ndarray) -> tuple[int, float, int, float] | None:
    """Exhaustive weighted-error search over features x midpoints.

    Ties resolve to the lowest feature index, then the lowest threshold,
    then polarity +1. Returns (feature, threshold, polarity, error).
    """
    n, d = X.shape
    w_signed_pos = np.where(signs > 0, w, 0.0)
    w_signed_neg = w - w_signed_pos
    # fsum is order-independent, keeping the search invariant to row permutation
    total_pos = math.fsum(w_signed_pos)
    total_neg = math.fsum(w_signed_neg)
    # err_plus[k, j]: error of "predict +1 strictly above split k" in column j;
    # err_minus is computed from its own sums (not 1 - err_plus) so that
    # flipping every label swaps the two surfaces bitwise
    cum_pos = np.cumsum(w_signed_pos[order], axis=0)[:-1, :]
    cum_neg = np.cumsum(w_signed_neg[order], axis=0)[:-1, :]
    err_plus = cum_pos + (total_neg - cum_neg)
    err_minus = cum_neg + (total_pos - cum_pos)

    if not valid.any():
        return None
    big = np.inf
    err_plus = np.where(valid, err_plus, big)
    err_minus = np.where(valid, err_minus, big)
    best = np.where(err_minus < err_plus, err_minus, err_plus)
    # feature-major flatten gives the documented tie-break order
    flat = np.argmin(best.T)
    j, k = divmod(int(flat), best.shape[0])
    err = float(best[k, j])
    if not math.isfinite(err):
        return None
    polarity = 1 if err_plus[k, j] <= err_minus[k, j] else -1
    return j, float(thresholds[k, j]), polarity, err


def fit_adaboost(train: TrainSet, n_rounds: int = 50, learning_rate: float = 1.0,
                 seed: int = 0) -> AdaBoostModel:
    """Discrete AdaBoost; stops early on a perfect or useless stump."""
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    X, y = train.X, train.y
    n, d = X.shape
    signs = np.where(y == 1, 1.0, -1.0)

    order = np.argsort(X, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(X, order, axis=0)
    valid = sorted_vals[1:, :] > sorted_vals[:-1, :]
    thresholds = 0.5 * (sorted_vals[1:, :] + sorted_vals[:-1, :])

    w = np.full(n, 1.0 / n)
    stumps: list[Stump] = []
    stage_errors: list[float] = []
    for _ in range(n_rounds):
        found = _best_stump(X, signs, w, order, valid, thresholds)
        if found is None:
            log.warning("adaboost: no valid split (all features constant)")
            break
        feature, threshold, polarity, err = found
        if err >= 0.5:
            break
        err_c = min(max(err, 1e-12), 1.0 - 1e-12)
        alpha = learning_rate * math.log((1.0 - err_c) / err_c)
        stump = Stump(feature, threshold, polarity, alpha)
        stumps.append(stump)
        stage_errors.append(err)
        if err <= 1e-12:
            break
        mistakes = stump.predict_signs(X) != signs
        w = w * np.exp(alpha * mistakes)
        w = w / math.fsum(w)
    return AdaBoostModel(tuple(stumps), d, tuple(stage_errors), seed)


def feature_importances(model: AdaBoostModel) -> np.ndarray:
    """Normalized per-feature sums of absolute stage weights."""
    if not isinstance(model, AdaBoostModel):
        raise DataError(f"feature importances need an adaboost model, got {model.kind}")
    raw = np.zeros(model.n_features)
    for stump in model.stumps:
        raw[stump.feature] += abs(stump.alpha)
    total = raw.sum()
    if total <= 0:
        raise DataError("model has no stumps, importances undefined")
    return raw / total


# ---------------------------------------------------------------------------
# Shared prediction surface

FittedModel = LogisticModel | SvmRbfModel | AdaBoostModel


def _check_width(model: FittedModel, X: np.ndarray) -> None:
    if isinstance(model, LogisticModel):
        expected = model.weights.shape[0]
    elif isinstance(model, SvmRbfModel):
        expected = model.support_vectors.shape[1] if model.support_vectors.size else X.shape[1]
    else:
        expected = model.n_features
    if X.shape[1] != expected:
        raise DataError(f"expected {expected} features, got {X.shape[1]}")


def predict_proba(model: FittedModel, X: np.ndarray) -> np.ndarray:
    """Probability of an up move for each row."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    _check_width(model, X)
    scores = model.decision_values(X)
    if isinstance(model, SvmRbfModel):
        return np.asarray(sigmoid(-(model.platt_a * scores + model.platt_b)))
    return np.asarray(sigmoid(scores))


def predict(model: FittedModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(labels, probabilities); the 0.5 boundary resolves to label 0."""
    probs = predict_proba(model, X)
    return (probs > 0.5).astype(int), probs
