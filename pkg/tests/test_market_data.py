import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from overreact.errors import EmptySeriesError, IngestError, InsufficientDataError, ParameterError
from overreact.market_data import (BarSeries, CleanReport, Frequency, clean_bars, filter_session,
                                   log_returns, parse_bars, read_bars_csv, resample,
                                   write_bars_csv)

from conftest import make_bars, multi_day_bars

M1, M5 = Frequency.of(1), Frequency.of(5)


def row(ts, o=100, h=101, l=99, c=100, v=10):
    return {"timestamp": ts, "open": o, "high": h, "low": l, "close": c, "volume": v}


def test_frequency_table():
    assert [Frequency.of(m).intervals_per_day for m in (1, 5, 10, 15)] == [390, 78, 39, 26]
    with pytest.raises(ParameterError):
        Frequency.of(7)


def test_parse_keeps_order_of_valid_rows():
    rows = [row(f"2021-01-04T10:0{k}:00") for k in range(3)]
    bars, rep = parse_bars(rows, M1)
    assert len(bars) == 3
    assert list(bars.timestamps.astype(str)) == [r["timestamp"] for r in rows]
    assert rep == CleanReport()


def test_parse_sorts_stably():
    rows = [row("2021-01-04T10:02:00", c=3), row("2021-01-04T10:01:00", c=1),
            row("2021-01-04T10:01:00", c=2)]
    bars, _ = parse_bars(rows, M1)
    assert list(bars.close) == [1, 2, 3]


def test_parse_drops_zero_close():
    bars, rep = parse_bars([row("2021-01-04T10:00:00"), row("2021-01-04T10:01:00", c=0)], M1)
    assert len(bars) == 1 and rep.invalid_dropped == 1


def test_parse_bad_timestamp_reports_row():
    with pytest.raises(IngestError) as info:
        parse_bars([row("2021-01-04T10:00:00"), row("yesterday")], M1)
    assert info.value.row == 1


def test_parse_empty():
    with pytest.raises(EmptySeriesError):
        parse_bars([], M1)


def _series(ts, close, volume=None, open_=None):
    n = len(ts)
    c = np.asarray(close, dtype=float)
    o = c.copy() if open_ is None else np.asarray(open_, dtype=float)
    v = np.ones(n) * 10 if volume is None else np.asarray(volume, dtype=float)
    hi = np.fmax(o, c)
    lo = np.fmin(o, c)
    return BarSeries(np.array(ts, dtype="datetime64[s]"), o, hi, lo, c, v, frequency=M5)


def test_clean_dedup_keeps_first():
    s = _series(["2021-01-04T10:00", "2021-01-04T10:00"], [100, 200])
    out, rep = clean_bars(s)
    assert list(out.close) == [100] and rep.duplicates_dropped == 1


def test_clean_forward_fills_volume_within_day():
    s = _series(["2021-01-04T10:00", "2021-01-04T10:05"], [100, 101], volume=[7, np.nan])
    out, rep = clean_bars(s)
    assert list(out.volume) == [7, 7] and rep.forward_filled == 1


def test_clean_drops_day_open_without_close():
    s = _series(["2021-01-04T04:05", "2021-01-04T04:10"], [np.nan, 101], open_=[100, 101])
    out, rep = clean_bars(s)
    assert len(out) == 1 and out.close[0] == 101
    assert rep.invalid_dropped == 1


def test_clean_does_not_fill_across_days():
    s = _series(["2021-01-04T19:55", "2021-01-05T04:05"], [100, np.nan], open_=[100, 101])
    out, _ = clean_bars(s)
    assert len(out) == 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 30), st.one_of(st.none(), st.floats(-5, 200)),
                          st.one_of(st.none(), st.floats(0, 1000))), min_size=1, max_size=40))
def test_clean_idempotent(items):
    items = sorted(items, key=lambda t: t[0])
    ts = [np.datetime64("2021-01-04T10:00") + np.timedelta64(5 * k, "m") for k, _, _ in items]
    close = [np.nan if c is None else c for _, c, _ in items]
    vol = [np.nan if v is None else v for _, _, v in items]
    s = BarSeries(np.array(ts, dtype="datetime64[s]"), np.array(close), np.array(close),
                  np.array(close), np.array(close), np.array(vol), frequency=M5)
    once, _ = clean_bars(s)
    twice, rep = clean_bars(once)
    assert once.equals(twice)
    assert rep == CleanReport()


@pytest.mark.parametrize("clock,kept", [("03:59", False), ("04:00", False), ("04:01", True),
                                        ("20:00", True), ("20:01", False)])
def test_session_boundaries(clock, kept):
    s = make_bars([100.0], minutes=1, timestamps=[np.datetime64(f"2021-01-04T{clock}:00")])
    assert len(filter_session(s)) == int(kept)


def test_resample_sums_volume():
    s = make_bars(np.arange(100, 105), start="2021-01-04T10:01:00", minutes=1,
                  volume=[1, 2, 3, 4, 5])
    out = resample(s, M5)
    assert len(out) == 1 and out.volume[0] == 15
    assert out.timestamps[0] == np.datetime64("2021-01-04T10:05:00")
    assert out.open[0] == s.open[0] and out.close[0] == s.close[-1]
    assert out.high[0] == s.high.max() and out.low[0] == s.low.min()


def test_resample_identity():
    s = make_bars([100.0], minutes=5)
    out = resample(s, M5)
    assert out.equals(s)


def test_resample_non_multiple():
    with pytest.raises(ParameterError):
        resample(make_bars([1.0, 2.0], minutes=5), Frequency.of(1))


def test_resample_session_edge():
    # 19:58, 19:59, 20:00 form the 20:00 bucket; 20:01, 20:02 fall in 20:05, which the session drops
    s = make_bars(np.arange(1.0, 6.0), start="2021-01-04T19:58:00", minutes=1, volume=[1] * 5)
    out = filter_session(resample(filter_session(s), M5))
    assert list(out.timestamps.astype(str)) == ["2021-01-04T20:00:00"]
    assert out.volume[0] == 3 and out.close[0] == 3.0
    loose = filter_session(resample(s, M5))
    assert len(loose) == 1


def test_resample_conserves_volume(rng):
    s = multi_day_bars(3, 60, rng, minutes=1)
    out = resample(s, Frequency.of(15))
    assert out.volume.sum() == s.volume.sum()
    assert (out.timestamps.astype("datetime64[D]") == out.timestamps.astype("datetime64[D]")).all()


def test_log_returns_examples():
    flat = make_bars([100.0, 100.0])
    assert log_returns(flat).values.tolist() == [0.0]
    up = make_bars([100.0, 100.0 * np.exp(0.01)])
    assert log_returns(up).values[0] == pytest.approx(0.01, abs=1e-15)
    ts = np.array(["2021-01-04T19:55", "2021-01-04T20:00", "2021-01-05T04:05",
                   "2021-01-05T04:10"], dtype="datetime64[s]")
    r = log_returns(make_bars([99.0, 100.0, 102.0, 103.0], timestamps=ts))
    assert r.values[-1] == pytest.approx(np.log(103 / 102), abs=1e-15)
    assert len(r) == 2 and r.first_of_day.tolist() == [True, True]


def test_log_returns_too_short():
    with pytest.raises(InsufficientDataError):
        log_returns(make_bars([100.0]))


def test_return_reconstruction_and_no_overnight(rng):
    bars = multi_day_bars(4, 30, rng)
    r = log_returns(bars)
    prev = bars.close[r.bar_index - 1]
    assert np.allclose(np.exp(r.values) * prev, bars.close[r.bar_index], rtol=1e-12, atol=0)
    assert (bars.days[r.bar_index] == bars.days[r.bar_index - 1]).all()
    assert len(r) == len(bars) - 4


def test_csv_roundtrip(tmp_path, day_bars):
    p = tmp_path / "bars.csv"
    write_bars_csv(day_bars, p)
    back, rep = read_bars_csv(p, day_bars.frequency)
    assert back.equals(day_bars)
    assert p.read_text().splitlines()[0] == "timestamp,open,high,low,close,volume"


def test_clean_report_json():
    assert '"forward_filled": 2' in CleanReport(1, 0, 2).to_json()


def test_bars_read_only(day_bars):
    with pytest.raises(ValueError):
        day_bars.close[0] = 1.0
