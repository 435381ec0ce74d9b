import numpy as np
import pandas as pd
import pytest

from overreact.emotions import (EMOTIONS, FEATURES, FeatureTable, TweetFrame, aggregate_emotions,
                                assemble_features, descriptive_stats, fit_scaler, read_tweets_csv,
                                transform, write_tweets_csv)
from overreact.errors import (AlignmentError, EmptySeriesError, IngestError,
                              InsufficientDataError, SchemaError)
from overreact.labeling import rolling_volatility
from overreact.market_data import Frequency, log_returns

from conftest import make_bars

M5 = Frequency.of(5)
GRID = np.datetime64("2021-01-04T10:00", "s") + np.arange(4) * np.timedelta64(300, "s")


def tweets(times, fear):
    scores = np.zeros((len(times), 7))
    scores[:, EMOTIONS.index("fear")] = fear
    return TweetFrame(np.array(times, dtype="datetime64[s]"), scores)


def test_empty_interval_is_zero():
    e = aggregate_emotions(tweets([], []), GRID, M5)
    assert (e.means == 0).all() and (e.counts == 0).all() and e.no_tweet.all()


def test_mean_and_right_closed_bounds():
    t = tweets(["2021-01-04T09:55:00", "2021-01-04T09:57:00", "2021-01-04T10:00:00",
                "2021-01-04T10:04:00", "2021-01-04T10:30:00"], [0.9, 0.2, 0.4, 0.7, 0.5])
    e = aggregate_emotions(t, GRID, M5)
    f = e.means[:, EMOTIONS.index("fear")]
    assert f[0] == pytest.approx(0.3) and e.counts.tolist() == [2, 1, 0, 0]
    assert f[1] == pytest.approx(0.7)
    assert e.excluded == 2  # 09:55 belongs to the previous interval; 10:30 lies past the grid
    assert e.no_tweet.tolist() == [False, False, True, True]


def test_forward_fill_switch():
    t = tweets(["2021-01-04T10:03:00"], [0.6])
    e = aggregate_emotions(t, GRID, M5, forward_fill=True)
    assert e.means[2, EMOTIONS.index("fear")] == pytest.approx(0.6)
    assert e.counts[2] == 0 and e.no_tweet[2]


def test_aggregation_bounds_and_future_tweets(rng):
    times = GRID[0] - np.timedelta64(299, "s") + rng.integers(0, 1200, 50).astype("timedelta64[s]")
    times.sort()
    t = TweetFrame(times, rng.uniform(0, 1, (50, 7)))
    e = aggregate_emotions(t, GRID, M5)
    pos = np.searchsorted(GRID, times)
    for i in range(len(GRID)):
        member = t.scores[pos == i]
        if len(member):
            assert (e.means[i] >= member.min(axis=0) - 1e-15).all()
            assert (e.means[i] <= member.max(axis=0) + 1e-15).all()
    cut = GRID[1]
    keep = times <= cut
    t2 = TweetFrame(times[keep], t.scores[keep])
    e2 = aggregate_emotions(t2, GRID, M5)
    assert np.array_equal(e.means[:2], e2.means[:2])


def test_tweet_validation():
    with pytest.raises(IngestError):
        TweetFrame(np.array(["2021-01-04T10:00"], dtype="datetime64[s]"), np.full((1, 7), 1.5))


def test_tweets_csv_roundtrip(tmp_path, rng):
    t = TweetFrame(GRID[:3], rng.uniform(0, 1, (3, 7)))
    write_tweets_csv(t, tmp_path / "t.csv")
    back = read_tweets_csv(tmp_path / "t.csv")
    assert np.array_equal(back.timestamps, t.timestamps) and np.array_equal(back.scores, t.scores)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == \
        "timestamp,anger,disgust,fear,joy,neutral,sadness,surprise"


def _features(n=60, volume=None):
    rng = np.random.default_rng(1)
    closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.002, n)))
    bars = make_bars(closes, start="2021-01-04T09:35:00", volume=volume)
    r = log_returns(bars)
    vols = rolling_volatility(r, 20)
    e = aggregate_emotions(tweets([], []), bars.timestamps, M5)
    return r, bars, vols, e, assemble_features(r, bars, vols, e)


def test_assemble_counts_and_columns():
    r, bars, vols, e, feats = _features()
    assert feats.names == FEATURES and len(FEATURES) == 12
    assert len(feats) == len(r) - 20
    assert np.array_equal(feats.column("r"), r.values[20:])
    assert np.array_equal(feats.column("sigma"), vols.values)
    assert (feats.column("no_tweet") == 1).all()


def test_log_volume_floor():
    n = 30
    vol = np.r_[np.full(n - 2, 1.0), 0.0, 50.0]
    *_, feats = _features(n, volume=vol)
    lv = feats.column("log_volume")
    assert lv[0] == 0.0 and lv[-2] == 0.0 and lv[-1] == pytest.approx(np.log(50))


def test_alignment_error_lists_timestamps():
    r, bars, vols, e, _ = _features()
    short = aggregate_emotions(tweets([], []), bars.timestamps[:-3], M5)
    with pytest.raises(AlignmentError) as info:
        assemble_features(r, bars, vols, short)
    assert len(info.value.timestamps) == 3


def _table(values, names=("a", "b", "no_tweet")):
    v = np.asarray(values, dtype=float)
    ts = np.datetime64("2021-01-04T10:00", "s") + np.arange(len(v)) * np.timedelta64(300, "s")
    return FeatureTable(ts, v, tuple(names), np.arange(len(v)))


def test_scaler_fit_and_guard():
    rows = _table([[5, 1, 0], [5, 2, 1], [5, 3, 1]])
    sc = fit_scaler(rows)
    x = transform(sc, rows)
    assert sc.scale[0] == 1.0 and (x[:, 0] == 0).all()
    assert x[:, 1].mean() == pytest.approx(0, abs=1e-9) and x[:, 1].std() == pytest.approx(1, abs=1e-9)
    assert x[:, 2].tolist() == [0, 1, 1]  # indicator passes through


def test_scaler_hand_oracle():
    rng = np.random.default_rng(5)
    train = _table(rng.normal(3, 2, (10, 3)))
    sc = fit_scaler(train)
    val = _table(rng.normal(3, 2, (10, 3)))
    for j in range(2):
        col = train.values[:, j]
        mu = sum(col) / 10
        sd = (sum((c - mu) ** 2 for c in col) / 10) ** 0.5
        expect = [(x - mu) / sd for x in val.values[:, j]]
        assert np.allclose(transform(sc, val)[:, j], expect, rtol=1e-12)
    state = sc.to_dict()
    transform(sc, val)
    assert sc.to_dict() == state
    assert np.array_equal(transform(sc, val), transform(sc, val))
    back = sc.inverse_transform(transform(sc, val))
    assert np.allclose(back, val.values, atol=1e-9)


def test_scaler_errors():
    with pytest.raises(InsufficientDataError):
        fit_scaler(_table([[1, 2, 0]]))
    sc = fit_scaler(_table([[1, 2, 0], [3, 4, 1]]))
    with pytest.raises(SchemaError, match="missing=\\['b'\\] extra=\\['c'\\]"):
        transform(sc, _table([[1, 2, 0]], names=("a", "c", "no_tweet")))


def test_descriptive_stats():
    t = descriptive_stats({"x": [1.0, 2.0, 3.0, 4.0]})
    assert t.loc["50%", "x"] == 2.5 and list(t.index) == ["mean", "std", "min", "25%", "50%", "75%", "max"]
    one = descriptive_stats({"x": [7.0]})
    assert one.loc["mean", "x"] == one.loc["min", "x"] == one.loc["max", "x"] == 7.0
    with pytest.raises(EmptySeriesError):
        descriptive_stats({"x": []})


def test_descriptive_stats_streaming_oracle(rng):
    x = rng.normal(0, 1, 500)
    t = descriptive_stats({"x": x})
    # Welford streaming mean and population variance
    mean, m2 = 0.0, 0.0
    for k, v in enumerate(x, 1):
        d = v - mean
        mean += d / k
        m2 += d * (v - mean)
    assert t.loc["mean", "x"] == pytest.approx(mean, abs=1e-9)
    assert t.loc["std", "x"] == pytest.approx(np.sqrt(m2 / len(x)), abs=1e-9)
    s = np.sort(x)
    h = (len(x) - 1) * 0.25
    lo = int(np.floor(h))
    assert t.loc["25%", "x"] == pytest.approx(s[lo] + (h - lo) * (s[lo + 1] - s[lo]), abs=1e-12)
