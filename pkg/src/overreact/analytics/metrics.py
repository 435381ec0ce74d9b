"""Risk-adjusted performance measures with intraday annualization.

All moments are population moments (divide by T).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InsufficientDataError, ParameterError, UndefinedMetricError
from ..market_data import Frequency

TRADING_DAYS = 252


def annualization_factor(freq) -> int:
    """252 trading days times intraday intervals per day."""
    if not isinstance(freq, Frequency):
        freq = Frequency.of(freq)
    return TRADING_DAYS * freq.intervals_per_day


def _as_returns(returns) -> np.ndarray:
    r = np.asarray(getattr(returns, "returns", returns), dtype=float)
    if r.ndim != 1:
        raise ParameterError("returns must be one-dimensional")
    return r


def sharpe(returns, A: float = 1.0, rf: float = 0.0) -> float:
    x = _as_returns(returns) - rf
    if len(x) < 2:
        raise InsufficientDataError("Sharpe needs at least two returns")
    sd = x.std()
    if not sd > 0:
        raise UndefinedMetricError("Sharpe ratio undefined: zero volatility")
    return float(x.mean() / sd * np.sqrt(A))


def sortino(returns, A: float = 1.0, rf: float = 0.0) -> float:
    x = _as_returns(returns) - rf
    if len(x) == 0:
        raise InsufficientDataError("Sortino needs returns")
    downside = np.sqrt(np.mean(np.minimum(x, 0.0) ** 2))
    if not downside > 0:
        raise UndefinedMetricError("Sortino ratio undefined: no downside deviation")
    return float(x.mean() / downside * np.sqrt(A))


def max_drawdown(equity) -> float:
    """Largest peak-to-date relative decline of a value path.

    An EquityCurve is measured on its value path including V_0 = 1.
    """
    v = equity.value_path if hasattr(equity, "value_path") else np.asarray(equity, dtype=float)
    if len(v) == 0:
        raise InsufficientDataError("empty value path")
    peak = np.maximum.accumulate(v)
    return float(np.max((peak - v) / peak))


def higher_moments(returns) -> tuple[float, float]:
    """(skewness, raw kurtosis); a normal sample has kurtosis near 3."""
    x = _as_returns(returns)
    d = x - x.mean()
    sd = np.sqrt(np.mean(d * d))
    if not sd > 0:
        raise UndefinedMetricError("moments undefined: zero volatility")
    return float(np.mean(d**3) / sd**3), float(np.mean(d**4) / sd**4)


def _maybe(fn, *args):
    try:
        return fn(*args)
    except (UndefinedMetricError, InsufficientDataError):
        return None


@dataclass(frozen=True)
class PerfReport:
    sharpe: float | None
    sortino: float | None
    max_drawdown: float
    skewness: float | None
    kurtosis: float | None
    annualized_return: float
    n_trades: int
    n_intervals: int
    status: str = "ok"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def perf_report(equity, freq, rf: float = 0.0, n_trades: int | None = None) -> PerfReport:
    """Summary of an EquityCurve; undefined ratios are reported as None."""
    A = annualization_factor(freq)
    r = _as_returns(equity)
    moments = _maybe(higher_moments, r)
    trades = n_trades if n_trades is not None else int(getattr(equity, "n_trades", 0))
    return PerfReport(
        sharpe=_maybe(sharpe, r, A, rf),
        sortino=_maybe(sortino, r, A, rf),
        max_drawdown=max_drawdown(equity) if len(r) else 0.0,
        skewness=moments[0] if moments else None,
        kurtosis=moments[1] if moments else None,
        annualized_return=float(r.mean() * A) if len(r) else 0.0,
        n_trades=trades,
        n_intervals=len(r),
        status="ok" if trades > 0 else "no_trades",
    )
