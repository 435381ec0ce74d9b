"""Seeded synthetic bars and tweet emotions with planted fear-driven effects.

Each trading day is generated from its own random stream derived from
``(seed, day_index)``; only the opening price level is chained across days.

Planted structure: fear spikes arrive at ``spike_rate`` per day. A spike at
bar k raises the fear share of tweets on bars k .. k+D-1 and adds a drift
of ``effect_strength`` per bar on bars k+1 .. k+D, where D is
``effect_duration``. In ``momentum`` mode the drift follows
``effect_sign`` (0 = random sign per event); ``mean_revert`` reverses it
after a spike-bar shock of ``spike_return`` in the planted sign.
"""
from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .emotions import EMOTIONS, TweetFrame
from .errors import ParameterError
from .market_data import DEFAULT_SESSION, BarSeries, Frequency

# Dirichlet means; ordering neutral > fear > surprise > joy > anger ~ sadness > disgust
BASELINE_MIX = np.array([0.05, 0.01, 0.15, 0.07, 0.55, 0.05, 0.12])
FEAR_MIX = np.array([0.04, 0.01, 0.80, 0.01, 0.10, 0.03, 0.01])
EFFECTS = ("none", "momentum", "mean_revert")

# frequent, large fear-driven drifts with a random direction per event, revealed by a
# small shock on the spike bar; no net trend, so short-biased benchmarks gain nothing
STRONG_MOMENTUM = {"effect": "momentum", "spike_rate": 30.0, "effect_strength": 0.03,
                   "effect_duration": 2, "effect_sign": 0, "spike_return": 0.004}


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    days: int = 20
    frequency: int = 5
    start_date: str = "2021-01-04"
    base_vol: float = 0.001
    persistence: float = 0.3
    spike_rate: float = 16.0
    spike_magnitude: float = 0.8
    effect: str = "momentum"
    effect_strength: float = 0.015
    effect_sign: int = -1
    effect_duration: int = 3
    spike_return: float = 0.0
    tweet_rate: float = 3.0
    dirichlet_concentration: float = 20.0
    volume_level: float = 5000.0

    def __post_init__(self):
        if not 0 <= self.persistence < 1:
            raise ParameterError("persistence must lie in [0, 1)")
        if self.spike_rate < 0 or self.tweet_rate < 0:
            raise ParameterError("rates must be non-negative")
        if self.effect not in EFFECTS:
            raise ParameterError(f"effect must be one of {EFFECTS}")
        if self.effect_sign not in (-1, 0, 1):
            raise ParameterError("effect_sign must be -1, 0 or 1")
        if self.days < 1 or self.effect_duration < 1:
            raise ParameterError("days and effect_duration must be positive")
        Frequency.of(self.frequency)


@dataclass
class SynthCorpus:
    bars: BarSeries
    tweets: TweetFrame
    plants: list = field(default_factory=list)

    def plant_log_json(self) -> str:
        return json.dumps(self.plants, indent=2)


def trading_dates(start: str, days: int) -> list[dt.date]:
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return [np.busday_offset(first, k).astype(dt.date) for k in range(days)]


def _spike_bars(rng, n_bars, cfg):
    D = cfg.effect_duration
    count = rng.poisson(cfg.spike_rate)
    # leave room for drift inside the day; keep events from overlapping
    lo, hi = 1, n_bars - D - 1
    if count == 0 or hi <= lo:
        return []
    cand = np.sort(rng.choice(np.arange(lo, hi), size=min(count * 2, hi - lo), replace=False))
    out, last = [], -np.inf
    for k in cand:
        if k - last >= D + 2:
            out.append(int(k))
            last = k
        if len(out) == count:
            break
    return out


def _generate_day(cfg: ScenarioConfig, day_index: int, freq: Frequency):
    rng = np.random.default_rng([cfg.seed, day_index])
    n = (16 * 60) // freq.minutes
    phi = cfg.persistence
    base2 = cfg.base_vol**2
    noise = np.empty(n)
    prev = 0.0
    z = rng.standard_normal(n)
    for k in range(n):
        sig = np.sqrt(base2 * (1 - phi) + phi * prev * prev)
        noise[k] = sig * z[k]
        prev = noise[k]
    r = noise.copy()
    fear_weight = np.zeros(n)
    events = []
    for k in _spike_bars(rng, n, cfg):
        sign = cfg.effect_sign if cfg.effect_sign else int(rng.choice([-1, 1]))
        D = cfg.effect_duration
        for j in range(D):
            fear_weight[k + j] = max(fear_weight[k + j], cfg.spike_magnitude * (0.85**j))
        drift = 0
        if cfg.effect == "momentum":
            drift = sign
        elif cfg.effect == "mean_revert":
            drift = -sign
        if cfg.effect != "none":
            r[k] += sign * cfg.spike_return
            r[k + 1:k + 1 + D] += drift * cfg.effect_strength
        events.append({"bar": k, "sign": int(drift if cfg.effect != "none" else 0),
                       "fear_sign": int(sign), "duration": D})

    # bar-level tweets
    counts = rng.poisson(cfg.tweet_rate, n)
    conc = cfg.dirichlet_concentration
    scores, offsets, bar_of = [], [], []
    for k in range(n):
        if counts[k] == 0:
            continue
        mix = (1 - fear_weight[k]) * BASELINE_MIX + fear_weight[k] * FEAR_MIX
        scores.append(rng.dirichlet(mix * conc, counts[k]))
        offsets.append(rng.integers(0, freq.minutes * 60, counts[k]))
        bar_of.append(np.full(counts[k], k))
    gap = rng.normal(0.0, 2 * cfg.base_vol)
    wick = np.abs(rng.normal(0.0, 0.3 * cfg.base_vol, (2, n)))
    vol = np.maximum(np.round(rng.lognormal(np.log(cfg.volume_level), 0.5, n)), 0)
    tweets = (np.concatenate(scores) if scores else np.zeros((0, len(EMOTIONS))),
              np.concatenate(offsets) if offsets else np.zeros(0, np.int64),
              np.concatenate(bar_of) if bar_of else np.zeros(0, np.int64))
    return r, gap, wick, vol, tweets, events


def generate(config: ScenarioConfig) -> SynthCorpus:
    freq = Frequency.of(config.frequency)
    dates = trading_dates(config.start_date, config.days)
    start_secs = DEFAULT_SESSION[0].hour * 3600
    step = freq.minutes * 60
    ts_all, o_all, h_all, l_all, c_all, v_all = [], [], [], [], [], []
    tw_ts, tw_scores, plants = [], [], []
    level = np.log(100.0)
    for d, date in enumerate(dates):
        r, gap, wick, vol, (sc, off, bar_of), events = _generate_day(config, d, freq)
        n = len(r)
        day0 = np.datetime64(date, "s")
        ends = day0 + np.timedelta64(start_secs, "s") + np.arange(1, n + 1) * np.timedelta64(step, "s")
        open0 = level + gap
        logc = open0 + np.cumsum(r)
        logo = np.r_[open0, logc[:-1]]
        close = np.exp(logc)
        open_ = np.exp(logo)
        high = np.maximum(open_, close) * np.exp(wick[0])
        low = np.minimum(open_, close) * np.exp(-wick[1])
        ts_all.append(ends)
        o_all.append(open_)
        h_all.append(high)
        l_all.append(low)
        c_all.append(close)
        v_all.append(vol)
        if len(sc):
            tw_ts.append(ends[bar_of] - off.astype("timedelta64[s]"))
            tw_scores.append(sc)
        for ev in events:
            k = ev["bar"]
            plants.append({
                "timestamp": np.datetime_as_string(ends[k], unit="s"),
                "day": d,
                "sign": ev["sign"],
                "fear_sign": ev["fear_sign"],
                "duration": ev["duration"],
                "drift_timestamps": [np.datetime_as_string(t, unit="s")
                                     for t in ends[k + 1:k + 1 + ev["duration"]]],
            })
        level = logc[-1]
    bars = BarSeries(np.concatenate(ts_all), np.concatenate(o_all), np.concatenate(h_all),
                     np.concatenate(l_all), np.concatenate(c_all), np.concatenate(v_all),
                     frequency=freq, session=DEFAULT_SESSION)
    if tw_ts:
        tts = np.concatenate(tw_ts)
        tsc = np.concatenate(tw_scores)
        order = np.argsort(tts, kind="stable")
        tweets = TweetFrame(tts[order], np.clip(tsc[order], 0.0, 1.0))
    else:
        tweets = TweetFrame(np.array([], dtype="datetime64[s]"), np.zeros((0, len(EMOTIONS))))
    return SynthCorpus(bars, tweets, plants)


def write_corpus(corpus: SynthCorpus, out_dir, config: ScenarioConfig | None = None) -> dict:
    from .emotions import write_tweets_csv
    from .market_data import write_bars_csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"bars": out / "bars.csv", "tweets": out / "tweets.csv", "plants": out / "plants.json"}
    write_bars_csv(corpus.bars, paths["bars"])
    write_tweets_csv(corpus.tweets, paths["tweets"])
    paths["plants"].write_text(corpus.plant_log_json())
    if config is not None:
        (out / "scenario.json").write_text(json.dumps(asdict(config), indent=2, sort_keys=True))
    return paths
