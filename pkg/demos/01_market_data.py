"""
Bars, sessions and returns
==========================

Raw 1-minute rows are cleaned, restricted to the 04:00-20:00 session and
resampled to 5-minute bars. Returns are close-to-close logs that never span
the overnight gap.
"""

import numpy as np

from overreact.market_data import (Frequency, clean_bars, filter_session, log_returns,
                                   parse_bars, resample)
from overreact.synth import ScenarioConfig, generate

# A synthetic 1-minute day stands in for vendor data; dump it to row dicts
# so it goes through the same parser a CSV would.
raw = generate(ScenarioConfig(seed=3, days=2, frequency=1)).bars
rows = [{"timestamp": str(t), "open": o, "high": h, "low": l, "close": c, "volume": v}
        for t, o, h, l, c, v in zip(raw.timestamps, raw.open, raw.high, raw.low,
                                    raw.close, raw.volume)]
rows.append(dict(rows[10]))  # a duplicate the cleaner should drop
parsed, parse_report = parse_bars(rows, Frequency.of(1))
bars, report = clean_bars(parsed)
bars = filter_session(bars)
print(parse_report)
print(report)

five = resample(bars, Frequency.of(5))
print(len(bars), "one-minute bars ->", len(five), "five-minute bars")
print("first bar ends at", five.timestamps[0], "last at", five.timestamps[-1])

# First return of each day is dropped rather than measured across the night.
r = log_returns(five)
print("returns:", len(r), " day openers flagged:", int(r.first_of_day.sum()))
print("mean |r| = %.2e" % np.abs(r.values).mean())
