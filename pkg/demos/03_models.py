"""
Training the classifiers
========================

Rows are split 60/20/20 in time with a one-row embargo. Hyperparameters
come from a randomized search over expanding-window folds inside the
training block.
"""

import numpy as np

from overreact.emotions import aggregate_emotions, assemble_features, fit_scaler, transform
from overreact.labeling import LabelParams, class_distribution, label, rolling_volatility
from overreact.market_data import log_returns
from overreact.modeling import (ClassifierSpec, chronological_split, class_weights,
                                classification_report, expanding_cv_folds,
                                randomized_search, train)
from overreact.synth import STRONG_MOMENTUM, ScenarioConfig, generate

corpus = generate(ScenarioConfig(seed=2, days=12, **STRONG_MOMENTUM))
bars = corpus.bars
r = log_returns(bars)
vols = rolling_volatility(r, 20)
feats = assemble_features(r, bars, vols, aggregate_emotions(corpus.tweets, bars.timestamps,
                                                            bars.frequency))
lab = label(r, vols, LabelParams(1.5))

# keep rows whose label (the next return) exists
have = np.isin(feats.ret_index + 1, lab.ret_index)
rows = feats.take(np.flatnonzero(have))
y = lab.states[np.searchsorted(lab.ret_index, rows.ret_index + 1)]

split = chronological_split(len(rows))
scaler = fit_scaler(rows.take(split.train))
X = transform(scaler, rows)
print("train/val/test:", len(split.train), len(split.validation), len(split.test))

folds = expanding_cv_folds(len(split.train), 3, 1)
for family in ("logistic", "gbt"):
    search = randomized_search(family, None, X[split.train], y[split.train], folds,
                               n_iter=3, seed=0)
    w = class_weights(class_distribution(y[split.train]))
    model = train(search.best,
                  X[split.train], y[split.train], weights=w[y[split.train] + 1])
    rep = classification_report(model, X[split.validation], y[split.validation])
    print(f"{family:9s} best={search.best.params} val accuracy={rep.accuracy:.3f}")
