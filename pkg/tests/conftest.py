import numpy as np
import pytest

from overreact.market_data import BarSeries, Frequency, log_returns


def make_bars(closes, start="2021-01-04T09:35:00", minutes=5, opens=None, volume=None,
              timestamps=None):
    """Bars on one grid from a close path; opens default to the previous close."""
    c = np.asarray(closes, dtype=float)
    n = len(c)
    if timestamps is None:
        timestamps = np.datetime64(start, "s") + np.arange(n) * np.timedelta64(minutes * 60, "s")
    o = np.r_[c[0], c[:-1]] if opens is None else np.asarray(opens, dtype=float)
    v = np.full(n, 100.0) if volume is None else np.asarray(volume, dtype=float)
    return BarSeries(np.asarray(timestamps, dtype="datetime64[s]"), o, np.maximum(o, c),
                     np.minimum(o, c), c, v, frequency=Frequency.of(minutes))


def multi_day_bars(n_days, per_day, rng, minutes=5, vol=0.002):
    """Random-walk bars over several days starting 09:35."""
    ts, closes = [], []
    level = 100.0
    for d in range(n_days):
        day = np.datetime64("2021-01-04", "D") + d
        t0 = day.astype("datetime64[s]") + np.timedelta64(9 * 3600 + 35 * 60, "s")
        ts.append(t0 + np.arange(per_day) * np.timedelta64(minutes * 60, "s"))
        path = level * np.exp(np.cumsum(rng.normal(0, vol, per_day)))
        closes.append(path)
        level = path[-1]
    return make_bars(np.concatenate(closes), minutes=minutes, timestamps=np.concatenate(ts))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def day_bars(rng):
    return multi_day_bars(3, 60, rng)


@pytest.fixture
def day_returns(day_bars):
    return log_returns(day_bars)


ACCEPTANCE = []


def record_criterion(number, title, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
