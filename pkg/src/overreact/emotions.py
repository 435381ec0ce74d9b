"""Tweet-emotion aggregation, predictor assembly and train-only z-scaling."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (AlignmentError, EmptySeriesError, IngestError, InsufficientDataError,
                     NotFittedError, SchemaError)
from .labeling import VolatilitySeries
from .market_data import BarSeries, Frequency, ReturnSeries

EMOTIONS = ("anger", "disgust", "fear", "joy", "neutral", "sadness", "surprise")
FEATURES = ("r", "log_volume", "sigma") + EMOTIONS + ("n_tweets", "no_tweet")
PASSTHROUGH = ("no_tweet",)


@dataclass(frozen=True, eq=False)
class TweetFrame:
    """Tweet-level emotion probabilities, one row per message."""

    timestamps: np.ndarray
    scores: np.ndarray  # (m, 7) in EMOTIONS order

    def __post_init__(self):
        if self.scores.shape != (len(self.timestamps), len(EMOTIONS)):
            raise SchemaError(f"scores must have shape (m, {len(EMOTIONS)})")
        if self.scores.size and (np.nanmin(self.scores) < 0 or np.nanmax(self.scores) > 1):
            raise IngestError("emotion scores must lie in [0, 1]")

    def __len__(self):
        return len(self.timestamps)


def read_tweets_csv(path) -> TweetFrame:
    stamps, scores = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"timestamp", *EMOTIONS} - set(reader.fieldnames or ())
        if missing:
            raise IngestError(f"tweets CSV missing columns {sorted(missing)}")
        for i, row in enumerate(reader):
            try:
                stamps.append(np.datetime64(row["timestamp"].strip(), "s"))
                scores.append([float(row[e]) for e in EMOTIONS])
            except ValueError as exc:
                raise IngestError(str(exc), row=i) from exc
    return TweetFrame(np.array(stamps, dtype="datetime64[s]"),
                      np.array(scores, dtype=float).reshape(-1, len(EMOTIONS)))


def write_tweets_csv(tweets: TweetFrame, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("timestamp",) + EMOTIONS)
        for ts, row in zip(tweets.timestamps, tweets.scores):
            w.writerow([np.datetime_as_string(ts, unit="s")] + [repr(float(v)) for v in row])


@dataclass(frozen=True, eq=False)
class EmotionIntervals:
    timestamps: np.ndarray  # interval ends
    means: np.ndarray  # (n, 7)
    counts: np.ndarray
    no_tweet: np.ndarray
    excluded: int = 0

    def __len__(self):
        return len(self.timestamps)


def aggregate_emotions(tweets: TweetFrame, grid: np.ndarray, frequency: Frequency,
                       forward_fill: bool = False) -> EmotionIntervals:
    """Average tweet vectors inside each right-closed interval ``(end - delta, end]``.

    Empty intervals get a zero vector and ``no_tweet = True``. With
    ``forward_fill`` an empty interval instead repeats the previous
    interval's vector when both lie on the same trading day (count stays 0).
    """
    grid = np.asarray(grid, dtype="datetime64[s]")
    if len(grid) > 1 and not (grid[1:] > grid[:-1]).all():
        raise AlignmentError("interval grid must be strictly increasing")
    n = len(grid)
    sums = np.zeros((n, len(EMOTIONS)))
    counts = np.zeros(n, dtype=np.int64)
    excluded = 0
    if len(tweets):
        pos = np.searchsorted(grid, tweets.timestamps, side="left")
        inside = pos < n
        inside[inside] = tweets.timestamps[inside] > grid[pos[inside]] - frequency.delta
        excluded = int((~inside).sum())
        np.add.at(sums, pos[inside], tweets.scores[inside])
        counts = np.bincount(pos[inside], minlength=n).astype(np.int64)
    means = np.zeros_like(sums)
    has = counts > 0
    means[has] = sums[has] / counts[has, None]
    if forward_fill:
        days = grid.astype("datetime64[D]")
        for i in range(1, n):
            if not has[i] and days[i] == days[i - 1]:
                means[i] = means[i - 1]
    return EmotionIntervals(grid, means, counts, ~has, excluded)


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Aligned predictor rows X_t; ``ret_index`` maps rows to return positions."""

    timestamps: np.ndarray
    values: np.ndarray
    names: tuple
    ret_index: np.ndarray

    def __len__(self):
        return len(self.timestamps)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def take(self, index) -> "FeatureTable":
        return FeatureTable(self.timestamps[index], self.values[index], self.names,
                            self.ret_index[index])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, columns=list(self.names),
                            index=pd.DatetimeIndex(self.timestamps, name="timestamp"))


def _lookup(grid: np.ndarray, wanted: np.ndarray, what: str) -> np.ndarray:
    pos = np.searchsorted(grid, wanted)
    pos_c = np.minimum(pos, max(len(grid) - 1, 0))
    ok = (pos < len(grid)) & (grid[pos_c] == wanted) if len(grid) else np.zeros(len(wanted), bool)
    if not ok.all():
        raise AlignmentError(f"timestamps missing from {what}", wanted[~ok])
    return pos


def assemble_features(returns: ReturnSeries, bars: BarSeries, vols: VolatilitySeries,
                      emotions: EmotionIntervals) -> FeatureTable:
    """One row per return position where sigma is defined."""
    idx = vols.ret_index
    ts = returns.timestamps[idx]
    if not np.array_equal(ts, vols.timestamps):
        raise AlignmentError("volatility series does not match returns",
                             vols.timestamps[vols.timestamps != ts])
    b = _lookup(bars.timestamps, ts, "bars")
    e = _lookup(emotions.timestamps, ts, "emotion intervals")
    values = np.column_stack([
        returns.values[idx],
        np.log(np.maximum(bars.volume[b], 1.0)),
        vols.values,
        emotions.means[e],
        emotions.counts[e].astype(float),
        emotions.no_tweet[e].astype(float),
    ])
    return FeatureTable(ts, values, FEATURES, np.asarray(idx))


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    names: tuple
    mean: np.ndarray
    scale: np.ndarray
    passthrough: np.ndarray  # bool mask, columns left unscaled

    def _check(self, names):
        names = tuple(names)
        if names != self.names:
            missing = [n for n in self.names if n not in names]
            extra = [n for n in names if n not in self.names]
            raise SchemaError(f"feature schema mismatch; missing={missing} extra={extra}"
                              + ("" if missing or extra else " (order differs)"))

    def transform(self, rows) -> np.ndarray:
        return transform(self, rows)

    def inverse_transform(self, matrix: np.ndarray) -> np.ndarray:
        x = np.array(matrix, dtype=float)
        m = ~self.passthrough
        x[:, m] = x[:, m] * self.scale[m] + self.mean[m]
        return x

    def to_dict(self) -> dict:
        return {"names": list(self.names), "mean": self.mean.tolist(),
                "scale": self.scale.tolist(), "passthrough": self.passthrough.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureScaler":
        return cls(tuple(d["names"]), np.array(d["mean"], dtype=float),
                   np.array(d["scale"], dtype=float), np.array(d["passthrough"], dtype=bool))


def fit_scaler(rows: FeatureTable, passthrough=PASSTHROUGH) -> FeatureScaler:
    """Per-feature mean and population std from training rows only."""
    if len(rows) < 2:
        raise InsufficientDataError("scaler needs at least two training rows")
    x = np.asarray(rows.values, dtype=float)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    mask = np.array([n in passthrough for n in rows.names])
    mean = np.where(mask, 0.0, mean)
    std = np.where(mask, 1.0, std)
    return FeatureScaler(tuple(rows.names), mean, std, mask)


def transform(scaler: FeatureScaler, rows: FeatureTable) -> np.ndarray:
    if scaler is None:
        raise NotFittedError("scaler is not fitted")
    scaler._check(rows.names)
    return (np.asarray(rows.values, dtype=float) - scaler.mean) / scaler.scale


STAT_ROWS = ("mean", "std", "min", "25%", "50%", "75%", "max")


def descriptive_stats(rows) -> pd.DataFrame:
    """Summary table (rows = statistics, columns = variables).

    ``std`` is the population standard deviation; quantiles interpolate
    linearly between order statistics.
    """
    if isinstance(rows, FeatureTable):
        frame = rows.to_frame()
    else:
        frame = pd.DataFrame(rows)
    if len(frame) == 0:
        raise EmptySeriesError("descriptive statistics need at least one row")
    x = frame.to_numpy(dtype=float)
    q = np.quantile(x, [0.25, 0.5, 0.75], axis=0, method="linear")
    table = np.vstack([x.mean(axis=0), x.std(axis=0), x.min(axis=0), q, x.max(axis=0)])
    return pd.DataFrame(table, index=list(STAT_ROWS), columns=list(frame.columns))
