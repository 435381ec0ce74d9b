"""Rolling volatility and volatility-scaled overreaction labels."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptySeriesError, InsufficientDataError, ParameterError
from .market_data import ReturnSeries

DEFAULT_TC = 0.001
DEFAULT_WINDOW = 20


class State(IntEnum):
    """Overreaction state. The integer value is the signed code (-1, 0, +1).

    Probability matrices throughout the package use column order
    (down, neutral, up), i.e. column ``state + 1``.
    """

    DOWN = -1
    NEUTRAL = 0
    UP = 1

    @property
    def column(self) -> int:
        return int(self) + 1

    @property
    def model_code(self) -> int:
        # neutral, positive, negative
        return {State.NEUTRAL: 0, State.UP: 1, State.DOWN: 2}[self]

    @classmethod
    def from_model_code(cls, code: int) -> "State":
        return (cls.NEUTRAL, cls.UP, cls.DOWN)[code]


STATE_NAMES = ("down", "neutral", "up")


def to_model_codes(states) -> np.ndarray:
    """Signed codes -> (0 neutral, 1 up, 2 down)."""
    s = np.asarray(states)
    return np.select([s == 1, s == -1], [1, 2], 0).astype(np.int64)


def from_model_codes(codes) -> np.ndarray:
    c = np.asarray(codes)
    return np.select([c == 1, c == 2], [1, -1], 0).astype(np.int8)


@dataclass(frozen=True)
class LabelParams:
    theta: float
    tc: float = DEFAULT_TC
    window: int = DEFAULT_WINDOW
    include_current_return: bool = False

    def __post_init__(self):
        if not self.theta > 0:
            raise ParameterError(f"theta must be positive, got {self.theta}")
        if not self.tc >= 0:
            raise ParameterError(f"tc must be non-negative, got {self.tc}")
        if self.window < 2:
            raise ParameterError(f"window must be >= 2, got {self.window}")


@dataclass(frozen=True, eq=False)
class VolatilitySeries:
    """sigma_t for return positions ``ret_index`` of the source ReturnSeries."""

    timestamps: np.ndarray
    values: np.ndarray
    ret_index: np.ndarray
    window: int

    def __len__(self):
        return len(self.values)

    def dense(self, n: int) -> np.ndarray:
        """Length-``n`` array over return positions, NaN where undefined."""
        out = np.full(n, np.nan)
        out[self.ret_index] = self.values
        return out


def rolling_volatility(returns: ReturnSeries, window: int = DEFAULT_WINDOW,
                       include_current_return: bool = False) -> VolatilitySeries:
    """Root-mean-square of the ``window`` returns preceding each return.

    By default sigma at position t uses r[t-window:t] (r_t excluded), so
    it is defined from position ``window`` onward. With
    ``include_current_return`` the window is r[t-window+1:t+1].
    """
    if window < 2:
        raise ParameterError("window must be >= 2")
    r = np.asarray(returns.values, dtype=float)
    n = len(r)
    if n < window:
        raise InsufficientDataError(f"need at least {window} returns, got {n}")
    ms = sliding_window_view(r * r, window).mean(axis=1)
    if include_current_return:
        idx = np.arange(window - 1, n)
    else:
        idx = np.arange(window, n)
        ms = ms[:-1]
    return VolatilitySeries(returns.timestamps[idx], np.sqrt(ms), idx, window)


@dataclass(frozen=True, eq=False)
class LabelSeries:
    """Labels for positions t+1, each decided from (r_{t+1}, sigma_t).

    ``origin`` is the return position t at which the label becomes the
    prediction target; ``ret_index`` is t+1.
    """

    timestamps: np.ndarray
    states: np.ndarray
    ret_index: np.ndarray
    origin: np.ndarray

    def __len__(self):
        return len(self.states)


def overreaction_state(next_return, sigma, theta, tc):
    """Vectorized three-state rule with strict inequalities."""
    barrier = theta * np.asarray(sigma, dtype=float) + 2 * tc
    r = np.asarray(next_return, dtype=float)
    return np.where(r > barrier, 1, np.where(r < -barrier, -1, 0)).astype(np.int8)


def label(returns: ReturnSeries, vols: VolatilitySeries, params: LabelParams) -> LabelSeries:
    n = len(returns)
    sigma = vols.dense(n)
    t = np.arange(n - 1)
    ok = ~np.isnan(sigma[t]) & ~returns.first_of_day[t + 1]
    t = t[ok]
    states = overreaction_state(returns.values[t + 1], sigma[t], params.theta, params.tc)
    return LabelSeries(returns.timestamps[t + 1], states, t + 1, t)


def theta_grid() -> list[float]:
    return [1.5 + 0.5 * k for k in range(8)]


def class_distribution(states) -> np.ndarray:
    """Frequencies ordered (down, neutral, up)."""
    s = np.asarray(getattr(states, "states", states))
    if s.size == 0:
        raise EmptySeriesError("no labels")
    counts = np.array([(s == -1).sum(), (s == 0).sum(), (s == 1).sum()], dtype=float)
    return counts / counts.sum()


def write_labels_csv(labels: LabelSeries, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("timestamp", "label"))
        for ts, s in zip(labels.timestamps, labels.states):
            w.writerow((np.datetime_as_string(ts, unit="s"), int(s)))


def read_labels_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    ts = np.array([r["timestamp"] for r in rows], dtype="datetime64[s]")
    states = np.array([int(r["label"]) for r in rows], dtype=np.int8)
    if not np.isin(states, (-1, 0, 1)).all():
        raise ParameterError("labels must be in {-1, 0, 1}")
    return ts, states
