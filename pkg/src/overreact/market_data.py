"""OHLCV ingestion, cleaning, session filtering, resampling and log returns.

Bars follow the interval-END convention: a bar stamped 10:05 covers
(10:00, 10:05]. Timestamps are naive exchange-local ``datetime64[s]``.
A trading day is the calendar date of the bar's end timestamp.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import EmptySeriesError, IngestError, InsufficientDataError, ParameterError

FIELDS = ("open", "high", "low", "close", "volume")

# intraday intervals on a 6.5 hour basis, used for annualization
_INTERVALS_PER_DAY = {1: 390, 5: 78, 10: 39, 15: 26}

DEFAULT_SESSION = (dt.time(4, 0), dt.time(20, 0))


@dataclass(frozen=True)
class Frequency:
    minutes: int
    intervals_per_day: int

    def __post_init__(self):
        if self.minutes <= 0 or 60 % self.minutes != 0:
            raise ParameterError(f"minutes-per-bar must divide 60, got {self.minutes}")
        if self.intervals_per_day <= 0:
            raise ParameterError("intervals_per_day must be positive")

    @classmethod
    def of(cls, minutes: int) -> "Frequency":
        try:
            return cls(int(minutes), _INTERVALS_PER_DAY[int(minutes)])
        except KeyError:
            raise ParameterError(
                f"unsupported frequency {minutes} min; expected one of {sorted(_INTERVALS_PER_DAY)}"
            ) from None

    @property
    def delta(self) -> np.timedelta64:
        return np.timedelta64(self.minutes * 60, "s")

    def __str__(self):
        return f"{self.minutes}min"


@dataclass(frozen=True)
class CleanReport:
    duplicates_dropped: int = 0
    invalid_dropped: int = 0
    forward_filled: int = 0

    def __add__(self, other: "CleanReport") -> "CleanReport":
        return CleanReport(
            self.duplicates_dropped + other.duplicates_dropped,
            self.invalid_dropped + other.invalid_dropped,
            self.forward_filled + other.forward_filled,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "duplicates_dropped": self.duplicates_dropped,
                "invalid_dropped": self.invalid_dropped,
                "forward_filled": self.forward_filled,
            },
            indent=2,
        )


@dataclass(frozen=True, eq=False)
class BarSeries:
    """Column-oriented bar container. Arrays are treated as read-only."""

    timestamps: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    frequency: Frequency
    session: tuple = DEFAULT_SESSION

    def __post_init__(self):
        n = len(self.timestamps)
        for name in FIELDS:
            if len(getattr(self, name)) != n:
                raise ParameterError(f"column {name} has wrong length")
        for name in ("timestamps",) + FIELDS:
            arr = getattr(self, name)
            arr.flags.writeable = False

    def __len__(self):
        return len(self.timestamps)

    @property
    def days(self) -> np.ndarray:
        return self.timestamps.astype("datetime64[D]")

    def take(self, index) -> "BarSeries":
        return BarSeries(
            *(np.array(getattr(self, name)[index]) for name in ("timestamps",) + FIELDS),
            frequency=self.frequency,
            session=self.session,
        )

    def between(self, start, end) -> "BarSeries":
        """Bars with ``start <= timestamp <= end``."""
        ts = self.timestamps
        return self.take(np.flatnonzero((ts >= start) & (ts <= end)))

    def equals(self, other: "BarSeries") -> bool:
        if len(self) != len(other) or self.frequency != other.frequency:
            return False
        if not np.array_equal(self.timestamps, other.timestamps):
            return False
        return all(np.array_equal(getattr(self, f), getattr(other, f), equal_nan=True) for f in FIELDS)

    def to_records(self) -> list[dict]:
        out = []
        for i in range(len(self)):
            row = {"timestamp": str(self.timestamps[i])}
            for f in FIELDS:
                row[f] = float(getattr(self, f)[i])
            out.append(row)
        return out


def _parse_number(value) -> float:
    if value is None:
        return np.nan
    if isinstance(value, str):
        value = value.strip()
        if value == "" or value.lower() in ("nan", "na", "null", "none"):
            return np.nan
    return float(value)


def _on_grid(ts: np.ndarray, frequency: Frequency) -> np.ndarray:
    secs = (ts - ts.astype("datetime64[D]")).astype("timedelta64[s]").astype(np.int64)
    return secs % (frequency.minutes * 60) == 0


def parse_bars(rows: Iterable[Mapping], frequency: Frequency) -> tuple[BarSeries, CleanReport]:
    """Parse tabular records into a sorted BarSeries.

    Rows with a non-positive price or an off-grid timestamp are dropped and
    counted as ``invalid_dropped``. Missing values are kept as NaN for
    :func:`clean_bars` to handle.
    """
    stamps, cols = [], {f: [] for f in FIELDS}
    invalid = 0
    n_rows = 0
    for i, row in enumerate(rows):
        n_rows += 1
        try:
            ts = np.datetime64(str(row["timestamp"]).strip(), "s")
        except (KeyError, ValueError) as exc:
            raise IngestError(f"unparseable timestamp {row.get('timestamp')!r}", row=i) from exc
        if np.isnat(ts):
            raise IngestError("missing timestamp", row=i)
        try:
            values = {f: _parse_number(row.get(f)) for f in FIELDS}
        except ValueError as exc:
            raise IngestError(str(exc), row=i) from exc
        prices = [values[f] for f in ("open", "high", "low", "close")]
        if any(p <= 0 for p in prices if not np.isnan(p)) or (values["volume"] < 0):
            invalid += 1
            continue
        stamps.append(ts)
        for f in FIELDS:
            cols[f].append(values[f])
    if n_rows == 0:
        raise EmptySeriesError("no bar rows supplied")
    ts = np.array(stamps, dtype="datetime64[s]")
    on_grid = _on_grid(ts, frequency) if len(ts) else np.array([], dtype=bool)
    invalid += int((~on_grid).sum())
    order = np.argsort(ts[on_grid], kind="stable")
    series = BarSeries(
        ts[on_grid][order],
        *(np.asarray(cols[f], dtype=float)[on_grid][order] for f in FIELDS),
        frequency=frequency,
    )
    return series, CleanReport(invalid_dropped=invalid)


def read_bars_csv(path, frequency: Frequency) -> tuple[BarSeries, CleanReport]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"timestamp", *FIELDS} - set(reader.fieldnames or ())
        if missing:
            raise IngestError(f"bars CSV missing columns {sorted(missing)}")
        return parse_bars(list(reader), frequency)


def write_bars_csv(series: BarSeries, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("timestamp",) + FIELDS)
        for i in range(len(series)):
            w.writerow(
                [np.datetime_as_string(series.timestamps[i], unit="s")]
                + [repr(float(getattr(series, f)[i])) for f in FIELDS]
            )


def clean_bars(series: BarSeries) -> tuple[BarSeries, CleanReport]:
    """Deduplicate, repair and validate a sorted BarSeries.

    Policy per bar, in order:

    * duplicate timestamp: keep the first occurrence;
    * every price field missing: drop (no market data);
    * missing close / volume: forward-fill from the previous bar of the
      same trading day, dropping the bar if there is none;
    * missing open: previous close of the same day; missing high/low:
      envelope of open and close;
    * any remaining OHLC inconsistency or non-positive price: drop.
    """
    n = len(series)
    if n == 0:
        return series, CleanReport()
    ts = series.timestamps
    keep = np.ones(n, dtype=bool)
    keep[1:] = ts[1:] != ts[:-1]
    dups = int((~keep).sum())
    s = series.take(np.flatnonzero(keep))

    o, h, lo, c, v = (np.array(getattr(s, f), dtype=float) for f in FIELDS)
    days = s.days
    valid = np.ones(len(s), dtype=bool)
    filled = 0
    prev_idx = -1  # last retained bar index
    for i in range(len(s)):
        same_day = prev_idx >= 0 and days[prev_idx] == days[i]
        if np.isnan(o[i]) and np.isnan(h[i]) and np.isnan(lo[i]) and np.isnan(c[i]):
            valid[i] = False
            continue
        touched = False
        if np.isnan(c[i]):
            if not same_day:
                valid[i] = False
                continue
            c[i] = c[prev_idx]
            touched = True
        if np.isnan(v[i]):
            if not same_day:
                valid[i] = False
                continue
            v[i] = v[prev_idx]
            touched = True
        if np.isnan(o[i]):
            o[i] = c[prev_idx] if same_day else c[i]
            touched = True
        if np.isnan(h[i]):
            h[i] = max(o[i], c[i])
            touched = True
        if np.isnan(lo[i]):
            lo[i] = min(o[i], c[i])
            touched = True
        ok = (
            min(o[i], h[i], lo[i], c[i]) > 0
            and lo[i] <= min(o[i], c[i])
            and max(o[i], c[i]) <= h[i]
            and v[i] >= 0
        )
        if not ok:
            valid[i] = False
            continue
        filled += touched
        prev_idx = i
    idx = np.flatnonzero(valid)
    out = BarSeries(
        np.array(s.timestamps[idx]), o[idx], h[idx], lo[idx], c[idx], v[idx],
        frequency=s.frequency, session=s.session,
    )
    return out, CleanReport(dups, int((~valid).sum()), filled)


def _clock_seconds(ts: np.ndarray) -> np.ndarray:
    return (ts - ts.astype("datetime64[D]")).astype("timedelta64[s]").astype(np.int64)


def filter_session(series: BarSeries, window=DEFAULT_SESSION) -> BarSeries:
    """Keep bars whose end clock time lies in ``(start, end]``."""
    start, end = window
    if start >= end:
        raise ParameterError("session start must precede end")
    lo = start.hour * 3600 + start.minute * 60 + start.second
    hi = end.hour * 3600 + end.minute * 60 + end.second
    secs = _clock_seconds(series.timestamps)
    out = series.take(np.flatnonzero((secs > lo) & (secs <= hi)))
    return BarSeries(
        *(np.array(getattr(out, f)) for f in ("timestamps",) + FIELDS),
        frequency=out.frequency,
        session=(start, end),
    )


def resample(series: BarSeries, target: Frequency) -> BarSeries:
    """Aggregate bars into right-closed buckets of ``target`` length.

    Bucket ends sit on the target grid measured from midnight, so a bucket
    never spans two trading days.
    """
    src = series.frequency.minutes
    if target.minutes % src != 0:
        raise ParameterError(f"target {target.minutes} min is not a multiple of source {src} min")
    if len(series) == 0 or target.minutes == src:
        return BarSeries(
            *(np.array(getattr(series, f)) for f in ("timestamps",) + FIELDS),
            frequency=target,
            session=series.session,
        )
    step = target.minutes * 60
    ts = series.timestamps
    day = ts.astype("datetime64[D]")
    secs = _clock_seconds(ts)
    bucket_secs = -(-secs // step) * step  # ceil
    bucket = day.astype("datetime64[s]") + bucket_secs.astype("timedelta64[s]")
    starts = np.flatnonzero(np.r_[True, bucket[1:] != bucket[:-1]])
    ends = np.r_[starts[1:], len(ts)] - 1
    return BarSeries(
        bucket[starts],
        series.open[starts],
        np.maximum.reduceat(series.high, starts),
        np.minimum.reduceat(series.low, starts),
        series.close[ends],
        np.add.reduceat(series.volume, starts),
        frequency=target,
        session=series.session,
    )


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    """Same-day close-to-close log returns.

    ``bar_index`` points at the bar each return ends on; ``first_of_day``
    marks the first retained return of each trading day (its predecessor
    return, if any, belongs to an earlier day).
    """

    timestamps: np.ndarray
    values: np.ndarray
    bar_index: np.ndarray
    first_of_day: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.values)

    def negated(self) -> "ReturnSeries":
        return ReturnSeries(self.timestamps, -self.values, self.bar_index, self.first_of_day)


def log_returns(series: BarSeries) -> ReturnSeries:
    if len(series) < 2:
        raise InsufficientDataError("log returns need at least two bars")
    days = series.days
    same_day = days[1:] == days[:-1]
    logp = np.log(series.close)
    r = (logp[1:] - logp[:-1])[same_day]
    idx = np.flatnonzero(same_day) + 1
    ret_days = days[idx]
    first = np.r_[True, ret_days[1:] != ret_days[:-1]] if len(idx) else np.array([], dtype=bool)
    return ReturnSeries(series.timestamps[idx], r, idx, first)
