"""
From probabilities to trades
============================

A signal at bar t is filled at the next bar's open. Each leg costs tc, so a
round trip costs 2tc and a direct long-to-short switch 4tc. Positions are
closed at the end of each day.
"""

import numpy as np

from overreact.analytics import perf_report
from overreact.backtest import SignalRule, benchmark_buy_hold, benchmark_random, generate_signals, simulate
from overreact.synth import ScenarioConfig, generate

bars = generate(ScenarioConfig(seed=4, days=3)).bars
rng = np.random.default_rng(0)

# A fake model: Dirichlet draws in (down, neutral, up) order.
probs = rng.dirichlet([1, 4, 1], len(bars))
for c in (0.4, 0.6, 0.8):
    sig = generate_signals(probs, c)
    print(f"c={c}: {int((sig != 0).sum())} signals")

sig = generate_signals(probs, 0.6)
for rule in (SignalRule(0.6, "fixed", 5), SignalRule(0.6, "until_opposite")):
    res = simulate(bars, sig, rule, tc=0.0005)
    p = perf_report(res.equity, bars.frequency)
    print(f"{rule.holding:15s} trades={p.n_trades:3d} costs={res.equity.costs.sum():.4f} "
          f"sharpe={p.sharpe}")

# %%
# Benchmarks share the same engine.
bh = benchmark_buy_hold(bars, 0.0005)
rnd = benchmark_random(bars, (0.1, 0.8, 0.1), SignalRule(0.6, "fixed", 5), 0.0005, seed=1)
print("buy & hold net:", round(float(bh.equity.returns.sum()), 5))
print("random net:   ", round(float(rnd.equity.returns.sum()), 5))
