"""Jobson-Korkie test for Sharpe-ratio differences with Memmel's correction."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import InsufficientDataError, UndefinedMetricError

MIN_OVERLAP = 30
JK_COLUMNS = ("timeframe", "comparison", "model", "ml_sharpe", "over_sharpe", "z", "p", "winner")


@dataclass(frozen=True)
class JKResult:
    sr1: float  # per-period
    sr2: float
    sr1_annualized: float
    sr2_annualized: float
    rho: float
    n: int
    z: float
    p: float
    winner: str

    def to_dict(self):
        return asdict(self)


def _align(a, b):
    """Pair two return series on common timestamps (or by position if plain arrays)."""
    if hasattr(a, "timestamps") and hasattr(b, "timestamps"):
        common, ia, ib = np.intersect1d(a.timestamps, b.timestamps, return_indices=True)
        return np.asarray(a.returns, float)[ia], np.asarray(b.returns, float)[ib]
    x = np.asarray(getattr(a, "returns", a), dtype=float)
    y = np.asarray(getattr(b, "returns", b), dtype=float)
    if len(x) != len(y):
        raise InsufficientDataError("unlabelled return arrays must have equal length")
    return x, y


def jk_statistic(sr1: float, sr2: float, rho: float, n: int) -> float:
    var = (2.0 + 0.5 * (sr1**2 + sr2**2 - 2.0 * rho * sr1 * sr2)) / n
    return (sr1 - sr2) / math.sqrt(var)


def jobson_korkie(returns1, returns2, A: float = 1.0, labels=("1", "2"),
                  alpha: float = 0.05) -> JKResult:
    """Test H0: SR1 = SR2 on the overlapping sample.

    Sharpe ratios and the correlation use population moments of the
    per-period returns. ``winner`` is the label of the larger Sharpe when
    p < ``alpha``, otherwise ``"none"``.
    """
    x, y = _align(returns1, returns2)
    n = len(x)
    if n < MIN_OVERLAP:
        raise InsufficientDataError(f"overlap of {n} < {MIN_OVERLAP} observations")
    sx, sy = x.std(), y.std()
    if not (sx > 0 and sy > 0):
        raise UndefinedMetricError("Jobson-Korkie undefined: zero variance")
    sr1, sr2 = x.mean() / sx, y.mean() / sy
    rho = float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))
    rho = min(1.0, max(-1.0, rho))
    z = 0.0 if sr1 == sr2 else jk_statistic(sr1, sr2, rho, n)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    winner = "none"
    if p < alpha:
        winner = labels[0] if z > 0 else labels[1]
    return JKResult(float(sr1), float(sr2), float(sr1 * math.sqrt(A)), float(sr2 * math.sqrt(A)),
                    rho, n, float(z), float(min(1.0, p)), winner)


def write_jk_csv(rows, path) -> None:
    """``rows``: dicts keyed by :data:`JK_COLUMNS`."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=JK_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k) for k in JK_COLUMNS})
