"""
Risk measures, Sharpe comparison and Shapley attributions
=========================================================
"""

import numpy as np

from overreact.analytics import (annualization_factor, jobson_korkie, max_drawdown,
                                 shapley_exact, shapley_sampled, sharpe, sortino)

rng = np.random.default_rng(5)
a = rng.normal(4e-4, 0.01, 2000)
b = 0.5 * a + rng.normal(0, 0.008, 2000)

A = annualization_factor(5)  # 252 days x 78 five-minute intervals
print("A =", A)
print("sharpe  a=%.2f b=%.2f" % (sharpe(a, A), sharpe(b, A)))
print("sortino a=%.2f" % sortino(a, A))
print("mdd     a=%.3f" % max_drawdown(np.exp(np.r_[0, np.cumsum(a)])))

# The test works on per-period ratios; A only rescales the reported ones.
jk = jobson_korkie(a, b, A, labels=("a", "b"))
print(f"JK z={jk.z:.2f} p={jk.p:.3f} winner={jk.winner}")

# %%
# Exact Shapley values enumerate every coalition; the sampled estimator
# averages marginal contributions over random orderings.
w = rng.normal(size=6)


def f(X):
    return np.tanh(X @ w)


background = rng.normal(size=(20, 6))
x = rng.normal(size=6)
exact = shapley_exact(f, x, background, target=0)
approx = shapley_sampled(f, x, background, target=0, m=500, seed=0)
print("exact  ", np.round(exact.values, 4))
print("sampled", np.round(approx.values, 4), "+/-", np.round(approx.std_err, 4))
print("efficiency gap", exact.base + exact.values.sum() - exact.output)
