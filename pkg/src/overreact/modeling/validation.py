"""Chronological splits, expanding-window CV, randomized search and scoring."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DegenerateModelError, InsufficientDataError, ParameterError
from ..labeling import class_distribution
from .models import ClassifierSpec, class_weights, train

SEARCH_SPACES = {
    "gbt": {
        "n_estimators": ("int", 50, 150),
        "max_depth": ("int", 3, 8),
        "learning_rate": ("float", 0.01, 0.11),
        "subsample": ("float", 0.7, 1.0),
        "colsample_bytree": ("float", 0.7, 1.0),
    },
    "random_forest": {
        "n_estimators": ("int", 50, 200),
        "max_depth": ("int", 3, 10),
        "max_features": ("choice", ["sqrt", "log2", None]),
        "min_samples_split": ("int", 2, 10),
        "min_samples_leaf": ("int", 1, 5),
    },
    "mlp": {},
    "logistic": {},
    "prior": {},
}


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.6
    validation: float = 0.2
    test: float = 0.2
    embargo: int = 1

    def __post_init__(self):
        fr = (self.train, self.validation, self.test)
        if min(fr) <= 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ParameterError(f"split fractions must be positive and sum to 1, got {fr}")
        if self.embargo < 0:
            raise ParameterError("embargo must be >= 0")


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    embargoed: np.ndarray
    n_rows: int


def _floor(x: float) -> int:
    return int(math.floor(x + 1e-9))


def chronological_split(n_rows: int, spec: SplitSpec = SplitSpec()) -> DatasetSplit:
    """Train/validation/test index ranges with the last ``embargo`` rows of
    train and of validation dropped."""
    if n_rows < 10:
        raise InsufficientDataError(f"need at least 10 rows to split, got {n_rows}")
    a = _floor(spec.train * n_rows)
    b = _floor((spec.train + spec.validation) * n_rows)
    e = spec.embargo
    train = np.arange(0, a - e)
    val = np.arange(a, b - e)
    test = np.arange(b, n_rows)
    if len(train) == 0 or len(val) == 0 or len(test) == 0:
        raise InsufficientDataError(f"{n_rows} rows leave an empty segment after embargo {e}")
    emb = np.r_[np.arange(a - e, a), np.arange(b - e, b)].astype(np.int64)
    return DatasetSplit(train, val, test, emb, n_rows)


def expanding_cv_folds(n_train: int, k: int = 3, embargo: int = 1) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split ``n_train`` rows into k+1 equal blocks; fold i fits on blocks
    0..i-1 minus the last ``embargo`` rows and validates on block i.

    Remainder rows (``n_train % (k+1)``) join the final validation block.
    """
    if k < 1:
        raise ParameterError("k must be >= 1")
    if n_train < 4 * (k + 1):
        raise InsufficientDataError(f"need at least {4 * (k + 1)} training rows for {k} folds")
    size = n_train // (k + 1)
    if size <= embargo:
        raise InsufficientDataError("blocks are not longer than the embargo")
    folds = []
    for i in range(1, k + 1):
        fit = np.arange(0, i * size - embargo)
        end = (i + 1) * size if i < k else n_train
        folds.append((fit, np.arange(i * size, end)))
    return folds


def predicted_states(proba: np.ndarray) -> np.ndarray:
    """Argmax in signed codes; any tie for the maximum resolves to neutral."""
    p = np.asarray(proba)
    mx = p.max(axis=1, keepdims=True)
    ties = (p == mx).sum(axis=1) > 1
    out = p.argmax(axis=1).astype(np.int8) - 1
    out[ties] = 0
    return out


def confusion(y_true, y_pred) -> np.ndarray:
    """3x3 counts, rows = true (down, neutral, up), columns = predicted."""
    t = np.asarray(y_true, dtype=np.int64) + 1
    p = np.asarray(y_pred, dtype=np.int64) + 1
    return np.bincount(t * 3 + p, minlength=9).reshape(3, 3)


def macro_f1(y_true, y_pred) -> float:
    cm = confusion(y_true, y_pred)
    scores = []
    for c in range(3):
        tp = cm[c, c]
        denom = 2 * tp + (cm[:, c].sum() - tp) + (cm[c, :].sum() - tp)
        if denom > 0:
            scores.append(2 * tp / denom)
    return float(np.mean(scores)) if scores else float("nan")


@dataclass
class ClassificationReport:
    accuracy: float
    precision: dict
    recall: dict
    confusion: np.ndarray
    n: int

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall,
                "confusion": self.confusion.tolist(), "n": self.n}


def classification_report(model, X, y) -> ClassificationReport:
    """Accuracy and per-class precision/recall; ``None`` marks 0/0 cases."""
    y = np.asarray(y)
    if len(y) == 0:
        raise InsufficientDataError("empty evaluation set")
    proba = model.predict_proba(X) if hasattr(model, "predict_proba") else np.asarray(X)
    pred = predicted_states(proba)
    cm = confusion(y, pred)
    names = {-1: "down", 0: "neutral", 1: "up"}
    precision, recall = {}, {}
    for c in range(3):
        col, row = cm[:, c].sum(), cm[c, :].sum()
        precision[names[c - 1]] = None if col == 0 else float(cm[c, c] / col)
        recall[names[c - 1]] = None if row == 0 else float(cm[c, c] / row)
    return ClassificationReport(float(np.trace(cm) / len(y)), precision, recall, cm, len(y))


def _log_loss(y, proba):
    cols = np.asarray(y, dtype=np.int64) + 1
    p = np.clip(proba[np.arange(len(cols)), cols], 1e-15, 1.0)
    return float(-np.log(p).mean())


def score_predictions(metric: str, y, proba) -> float:
    if metric == "macro_f1":
        return macro_f1(y, predicted_states(proba))
    if metric == "accuracy":
        return float((predicted_states(proba) == np.asarray(y)).mean())
    if metric == "log_loss":
        return -_log_loss(y, proba)
    raise ParameterError(f"unknown CV metric {metric!r}")


def sample_config(space: dict, rng: np.random.Generator) -> dict:
    cfg = {}
    for name in sorted(space):
        kind, *args = space[name]
        if kind == "int":
            cfg[name] = int(rng.integers(args[0], args[1] + 1))
        elif kind == "float":
            cfg[name] = float(rng.uniform(args[0], args[1]))
        elif kind == "choice":
            cfg[name] = args[0][int(rng.integers(0, len(args[0])))]
        else:
            raise ParameterError(f"unknown search dimension kind {kind!r}")
    return cfg


@dataclass
class SearchResult:
    best: ClassifierSpec
    table: list  # (config_id, fold, score)
    configs: list
    mean_scores: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("config_id", "fold", "score"))
            for cid, fold, score in self.table:
                w.writerow((cid, fold, repr(float(score))))


def _tie_key(cfg):
    ne = cfg.get("n_estimators", 0)
    md = cfg.get("max_depth")
    return (ne, np.inf if md is None else md)


def randomized_search(family: str, space: dict | None, X, y, folds, n_iter: int = 20,
                      seed: int = 0, metric: str = "macro_f1", base_params: dict | None = None) -> SearchResult:
    """Sample ``n_iter`` configurations and keep the best mean CV score.

    Class weights are recomputed from each fold's fit labels. A fold whose
    fit labels contain a single class scores NaN and is skipped in the mean.
    Ties go to fewer estimators, then shallower trees, then earlier draws.
    """
    if n_iter < 1:
        raise ParameterError("n_iter must be >= 1")
    if not folds:
        raise ParameterError("no CV folds supplied")
    space = SEARCH_SPACES.get(family, {}) if space is None else space
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    configs = [{**(base_params or {}), **sample_config(space, rng)} for _ in range(n_iter)]
    table, means = [], []
    for cid, cfg in enumerate(configs):
        spec = ClassifierSpec(family, cfg, seed)
        scores = []
        for fi, (fit, val) in enumerate(folds):
            if len(fit) == 0 or len(val) == 0:
                raise ParameterError(f"fold {fi} is empty")
            w = class_weights(class_distribution(y[fit]))
            try:
                model = train(spec, X[fit], y[fit], w)
                score = score_predictions(metric, y[val], model.predict_proba(X[val]))
            except DegenerateModelError:
                score = float("nan")
            table.append((cid, fi, score))
            scores.append(score)
        finite = [s for s in scores if np.isfinite(s)]
        means.append(float(np.mean(finite)) if finite else -np.inf)
    order = sorted(range(n_iter), key=lambda i: (-means[i], *_tie_key(configs[i]), i))
    best = order[0]
    return SearchResult(ClassifierSpec(family, configs[best], seed), table, configs, means)
