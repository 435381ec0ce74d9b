"""Interventional Shapley attributions for any probabilistic model.

The value of a coalition S at point x is the model output averaged over
background rows b, with features in S taken from x and the rest from b.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ParameterError
from ..labeling import State

MAX_EXACT_FEATURES = 16
_CHUNK_ROWS = 200_000


@dataclass(frozen=True, eq=False)
class ShapExplanation:
    base: float
    values: np.ndarray
    output: float
    target: object
    method: str
    std_err: np.ndarray | None = None


def _output_fn(model, target):
    """Return f(X) -> (n, k) matrix and the column to explain."""
    if hasattr(model, "predict_proba"):
        col = State(target).column if target is not None else 0
        return model.predict_proba, col
    if callable(model):
        def f(X):
            out = np.asarray(model(X), dtype=float)
            return out[:, None] if out.ndim == 1 else out
        return f, 0 if target is None else int(target)
    raise ParameterError("model must have predict_proba or be callable")


def _coalition_values(f, x, background, masks, d):
    """Mean model output over background for each coalition mask -> (len(masks), k)."""
    B = np.asarray(background, dtype=float)
    nb = len(B)
    bits = ((masks[:, None] >> np.arange(d)) & 1).astype(bool)
    per = max(1, _CHUNK_ROWS // max(nb, 1))
    out = []
    for s in range(0, len(masks), per):
        blk = bits[s:s + per]
        hyb = np.where(blk[:, None, :], x[None, None, :], B[None, :, :]).reshape(-1, d)
        vals = f(hyb)
        out.append(vals.reshape(len(blk), nb, -1).mean(axis=1))
    return np.concatenate(out, axis=0)


def _check(x, background):
    x = np.asarray(x, dtype=float).ravel()
    B = np.asarray(background, dtype=float)
    if B.ndim != 2 or len(B) == 0:
        raise ParameterError("background must be a non-empty 2D array")
    if B.shape[1] != len(x):
        raise ParameterError("background width differs from x")
    return x, B


def _exact_from_values(v, d):
    masks = np.arange(1 << d)
    size = np.array([bin(m).count("1") for m in masks])
    fact = [math.factorial(k) for k in range(d + 1)]
    w = np.array([fact[s] * fact[d - s - 1] / fact[d] if s < d else 0.0 for s in range(d + 1)])
    phi = np.zeros((d,) + v.shape[1:])
    for i in range(d):
        S = masks[((masks >> i) & 1) == 0]
        phi[i] = (w[size[S]][:, None] * (v[S | (1 << i)] - v[S])).sum(axis=0)
    return phi


def shapley_exact(model, x, background, target=State.UP) -> ShapExplanation:
    """Exact enumeration over all 2^d coalitions (d <= 16)."""
    x, B = _check(x, background)
    d = len(x)
    if d > MAX_EXACT_FEATURES:
        raise ParameterError(f"{d} features is too many for exact enumeration; use shapley_sampled")
    f, col = _output_fn(model, target)
    v = _coalition_values(f, x, B, np.arange(1 << d), d)
    phi = _exact_from_values(v, d)
    return ShapExplanation(float(v[0, col]), phi[:, col], float(v[-1, col]), target, "exact")


def shapley_sampled(model, x, background, target=State.UP, m: int = 1000,
                    seed: int = 0) -> ShapExplanation:
    """Permutation-sampling estimate with per-feature standard errors.

    When ``m >= d!`` every permutation is enumerated once and the result is
    the exact Shapley value.
    """
    if m < 1:
        raise ParameterError("m must be >= 1")
    x, B = _check(x, background)
    d = len(x)
    f, col = _output_fn(model, target)
    if m >= math.factorial(d):
        perms = np.array(list(itertools.permutations(range(d))), dtype=np.int64).reshape(-1, d)
        method = "sampled(all)"
    else:
        rng = np.random.default_rng(seed)
        perms = np.array([rng.permutation(d) for _ in range(m)], dtype=np.int64)
        method = f"sampled({m})"
    # prefix masks along each permutation
    prefix = np.zeros((len(perms), d + 1), dtype=np.int64)
    for j in range(d):
        prefix[:, j + 1] = prefix[:, j] | (1 << perms[:, j])
    uniq, inv = np.unique(prefix, return_inverse=True)
    v = _coalition_values(f, x, B, uniq, d)[:, col]
    vp = v[inv.reshape(prefix.shape)]
    contrib = np.zeros((len(perms), d))
    rows = np.arange(len(perms))
    for j in range(d):
        contrib[rows, perms[:, j]] = vp[:, j + 1] - vp[:, j]
    phi = contrib.mean(axis=0)
    se = contrib.std(axis=0, ddof=1) / np.sqrt(len(perms)) if len(perms) > 1 else np.zeros(d)
    full = _coalition_values(f, x, B, np.array([0, (1 << d) - 1]), d)[:, col]
    return ShapExplanation(float(full[0]), phi, float(full[1]), target, method, se)


@dataclass(frozen=True, eq=False)
class ShapSummary:
    names: tuple
    features: np.ndarray  # (n_rows, d) explained feature values
    attributions: dict  # State -> (n_rows, d)
    base: dict  # State -> float

    def mean_abs(self, target=None) -> np.ndarray:
        targets = [target] if target is not None else list(self.attributions)
        return np.mean([np.abs(self.attributions[t]).mean(axis=0) for t in targets], axis=0)

    def ranking(self, target=None) -> list[str]:
        """Feature names by decreasing mean |attribution|; ties keep schema order."""
        score = self.mean_abs(target)
        order = np.argsort(-score, kind="stable")
        return [self.names[i] for i in order]

    def write_csv(self, path, feature_values=None) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        fv = self.features if feature_values is None else feature_values
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("class", "feature", "feature_value", "attribution"))
            for t, att in self.attributions.items():
                cls_name = State(t).name.lower()
                for j, name in enumerate(self.names):
                    for i in range(len(att)):
                        w.writerow((cls_name, name, repr(float(fv[i, j])), repr(float(att[i, j]))))


def shap_summary(model, rows, background, targets=(State.UP, State.DOWN),
                 names=None) -> ShapSummary:
    """Exact attributions for every row, for each target class."""
    R = np.asarray(rows, dtype=float)
    if R.ndim != 2 or len(R) == 0:
        raise ParameterError("rows must be a non-empty 2D array")
    d = R.shape[1]
    if d > MAX_EXACT_FEATURES:
        raise ParameterError("too many features for exact summary")
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(d))
    f, _ = _output_fn(model, State.UP)
    B = np.asarray(background, dtype=float)
    masks = np.arange(1 << d)
    att = {State(t): np.zeros((len(R), d)) for t in targets}
    base = {}
    for i, x in enumerate(R):
        v = _coalition_values(f, x, B, masks, d)
        phi = _exact_from_values(v, d)
        for t in att:
            att[t][i] = phi[:, t.column]
            base[t] = float(v[0, t.column])
    return ShapSummary(names, R, att, base)
