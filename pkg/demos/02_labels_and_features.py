"""
Volatility-scaled labels and the feature matrix
===============================================

A return counts as an overreaction when it clears theta times the trailing
volatility plus the round-trip cost. The label for t+1 is attached to the
features known at t.
"""

import numpy as np

from overreact.emotions import aggregate_emotions, assemble_features, fit_scaler, transform
from overreact.labeling import LabelParams, class_distribution, label, rolling_volatility
from overreact.market_data import log_returns
from overreact.synth import STRONG_MOMENTUM, ScenarioConfig, generate

corpus = generate(ScenarioConfig(seed=1, days=5, **STRONG_MOMENTUM))
bars, tweets = corpus.bars, corpus.tweets
r = log_returns(bars)
vols = rolling_volatility(r, 20)

# Larger theta means rarer events.
for theta in (1.0, 1.5, 2.0, 3.0):
    lab = label(r, vols, LabelParams(theta, tc=0.001))
    down, neutral, up = class_distribution(lab.states)
    print(f"theta={theta:<4} down={down:.3f} neutral={neutral:.3f} up={up:.3f}")

# %%
# Tweets are averaged per interval; empty intervals carry a no_tweet flag.
emo = aggregate_emotions(tweets, bars.timestamps, bars.frequency)
feats = assemble_features(r, bars, vols, emo)
print(feats.to_frame().head())

# The scaler sees only the first 60% of rows.
n_train = int(0.6 * len(feats))
scaler = fit_scaler(feats.take(np.arange(n_train)))
Z = transform(scaler, feats)
print("train means after scaling:", np.round(Z[:n_train].mean(axis=0), 3))
