"""Histogram-binned decision trees compiled with numba.

Two growers share one node layout:

* ``grow_gini_tree``: classification tree, weighted Gini criterion, leaves
  hold weighted class frequencies.
* ``grow_newton_tree``: regression tree on gradient/hessian pairs with L2
  damping, leaves hold the Newton step ``-G / (H + lambda)``.

Trees are stored as flat arrays; ``feature == -1`` marks a leaf. A sample
goes left when ``x[feature] <= threshold``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

MAX_BINS = 255


@dataclass(frozen=True, eq=False)
class Binner:
    """Per-feature cut points; bin(x) = number of cut points strictly below x."""

    thresholds: tuple

    @classmethod
    def fit(cls, X: np.ndarray, max_bins: int = MAX_BINS) -> "Binner":
        cuts = []
        for j in range(X.shape[1]):
            u = np.unique(X[:, j])
            if len(u) <= max_bins:
                c = (u[:-1] + u[1:]) / 2.0
            else:
                q = np.quantile(X[:, j], np.linspace(0, 1, max_bins + 1)[1:-1])
                c = np.unique(q)
            cuts.append(np.ascontiguousarray(c, dtype=np.float64))
        return cls(tuple(cuts))

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([len(c) + 1 for c in self.thresholds], dtype=np.int64)

    def transform(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape, dtype=np.uint8)
        for j, c in enumerate(self.thresholds):
            out[:, j] = np.searchsorted(c, X[:, j], side="left")
        return out

    def cut_matrix(self) -> np.ndarray:
        width = max((len(c) for c in self.thresholds), default=0) or 1
        m = np.full((len(self.thresholds), width), np.inf)
        for j, c in enumerate(self.thresholds):
            m[j, : len(c)] = c
        return m


@numba.njit(cache=True)
def _partition(idx, start, end, Xb, f, k):
    # rows with Xb[., f] <= k first; returns split position
    i = start
    j = end - 1
    while i <= j:
        if Xb[idx[i], f] <= k:
            i += 1
        else:
            tmp = idx[i]
            idx[i] = idx[j]
            idx[j] = tmp
            j -= 1
    return i


@numba.njit(cache=True)
def grow_gini_tree(Xb, n_bins, cuts, y, w, mult, max_depth, min_samples_split,
                   min_samples_leaf, max_features, seed):
    """Grow one classification tree.

    ``y`` holds class indices 0..2, ``w`` per-sample weights, ``mult`` the
    bootstrap multiplicity of each row (0 = out of bag).
    """
    np.random.seed(seed)
    n, d = Xb.shape
    n_cls = 3
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros((cap, n_cls))

    m = 0
    for i in range(n):
        if mult[i] > 0:
            m += 1
    idx = np.empty(m, np.int64)
    m = 0
    for i in range(n):
        if mult[i] > 0:
            idx[m] = i
            m += 1

    feats = np.arange(d)
    max_nb = 0
    for f in range(d):
        if n_bins[f] > max_nb:
            max_nb = n_bins[f]
    hw = np.zeros((max_nb, n_cls))
    hc = np.zeros(max_nb)

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m
    st_depth[0] = 0
    sp = 1
    n_nodes = 1

    tot = np.zeros(n_cls)
    wl = np.zeros(n_cls)
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]

        tot[:] = 0.0
        cnt = 0.0
        for ii in range(start, end):
            r = idx[ii]
            tot[y[r]] += w[r] * mult[r]
            cnt += mult[r]
        wsum = tot.sum()
        if wsum > 0:
            for c in range(n_cls):
                value[node, c] = tot[c] / wsum
        n_pos = 0
        for c in range(n_cls):
            if tot[c] > 0:
                n_pos += 1
        if depth >= max_depth or cnt < min_samples_split or n_pos <= 1 or wsum <= 0:
            continue

        parent_score = 0.0
        for c in range(n_cls):
            parent_score += tot[c] * tot[c]
        parent_score /= wsum

        # partial Fisher-Yates for the feature subset
        for a in range(max_features):
            b = a + int(np.random.random() * (d - a))
            if b >= d:
                b = d - 1
            tmp = feats[a]
            feats[a] = feats[b]
            feats[b] = tmp

        best_score = parent_score + 1e-12 * wsum
        best_f = -1
        best_k = -1
        for a in range(max_features):
            f = feats[a]
            nb = n_bins[f]
            if nb < 2:
                continue
            hw[:nb, :] = 0.0
            hc[:nb] = 0.0
            for ii in range(start, end):
                r = idx[ii]
                b = Xb[r, f]
                hw[b, y[r]] += w[r] * mult[r]
                hc[b] += mult[r]
            wl[:] = 0.0
            nl = 0.0
            for k in range(nb - 1):
                for c in range(n_cls):
                    wl[c] += hw[k, c]
                nl += hc[k]
                nr = cnt - nl
                if nl < min_samples_leaf:
                    continue
                if nr < min_samples_leaf:
                    break
                WL = wl.sum()
                WR = wsum - WL
                if WL <= 0 or WR <= 0:
                    continue
                sl = 0.0
                sr = 0.0
                for c in range(n_cls):
                    sl += wl[c] * wl[c]
                    rc = tot[c] - wl[c]
                    sr += rc * rc
                score = sl / WL + sr / WR
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_k = k
        if best_f < 0:
            continue
        mid = _partition(idx, start, end, Xb, best_f, best_k)
        feature[node] = best_f
        threshold[node] = cuts[best_f, best_k]
        l = n_nodes
        rgt = n_nodes + 1
        n_nodes += 2
        left[node] = l
        right[node] = rgt
        st_node[sp] = rgt
        st_start[sp] = mid
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = l
        st_start[sp] = start
        st_end[sp] = mid
        st_depth[sp] = depth + 1
        sp += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@numba.njit(cache=True)
def grow_newton_tree(Xb, n_bins, cuts, g, h, rows, feat_mask, max_depth, lam,
                     min_samples_leaf):
    """Grow one second-order regression tree on the rows listed in ``rows``."""
    n, d = Xb.shape
    m = rows.shape[0]
    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros((cap, 1))
    idx = rows.copy()

    max_nb = 0
    for f in range(d):
        if n_bins[f] > max_nb:
            max_nb = n_bins[f]
    hg = np.zeros(max_nb)
    hh = np.zeros(max_nb)
    hc = np.zeros(max_nb)

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        G = 0.0
        H = 0.0
        for ii in range(start, end):
            r = idx[ii]
            G += g[r]
            H += h[r]
        value[node, 0] = -G / (H + lam)
        cnt = end - start
        if depth >= max_depth or cnt < 2 * min_samples_leaf:
            continue
        parent = G * G / (H + lam)
        best_gain = 1e-12
        best_f = -1
        best_k = -1
        for f in range(d):
            if not feat_mask[f]:
                continue
            nb = n_bins[f]
            if nb < 2:
                continue
            hg[:nb] = 0.0
            hh[:nb] = 0.0
            hc[:nb] = 0.0
            for ii in range(start, end):
                r = idx[ii]
                b = Xb[r, f]
                hg[b] += g[r]
                hh[b] += h[r]
                hc[b] += 1.0
            GL = 0.0
            HL = 0.0
            nl = 0.0
            for k in range(nb - 1):
                GL += hg[k]
                HL += hh[k]
                nl += hc[k]
                if nl < min_samples_leaf:
                    continue
                if cnt - nl < min_samples_leaf:
                    break
                GR = G - GL
                HR = H - HL
                gain = GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_k = k
        if best_f < 0:
            continue
        mid = _partition(idx, start, end, Xb, best_f, best_k)
        feature[node] = best_f
        threshold[node] = cuts[best_f, best_k]
        l = n_nodes
        rgt = n_nodes + 1
        n_nodes += 2
        left[node] = l
        right[node] = rgt
        st_node[sp] = rgt
        st_start[sp] = mid
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = l
        st_start[sp] = start
        st_end[sp] = mid
        st_depth[sp] = depth + 1
        sp += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@numba.njit(cache=True)
def predict_forest(X, feature, threshold, left, right, value, out_col, n_out):
    """Sum leaf vectors of stacked trees into ``n_out`` output columns.

    Stacked arrays have shape (n_trees, max_nodes[, width]); tree ``t``
    adds its leaf vector to columns ``out_col[t]:out_col[t] + width``.
    """
    n = X.shape[0]
    n_trees = feature.shape[0]
    width = value.shape[2]
    out = np.zeros((n, n_out))
    for t in range(n_trees):
        c0 = out_col[t]
        for i in range(n):
            node = 0
            while feature[t, node] >= 0:
                if X[i, feature[t, node]] <= threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            for j in range(width):
                out[i, c0 + j] += value[t, node, j]
    return out


def stack_trees(trees: list) -> tuple:
    """Pad a list of (feature, threshold, left, right, value) into 2D/3D arrays."""
    width = max(len(t[0]) for t in trees)
    k = len(trees)
    vdim = trees[0][4].shape[1]
    feature = np.full((k, width), -1, np.int64)
    threshold = np.zeros((k, width))
    left = np.full((k, width), -1, np.int64)
    right = np.full((k, width), -1, np.int64)
    value = np.zeros((k, width, vdim))
    for i, (f, th, l, r, v) in enumerate(trees):
        n = len(f)
        feature[i, :n] = f
        threshold[i, :n] = th
        left[i, :n] = l
        right[i, :n] = r
        value[i, :n] = v
    return feature, threshold, left, right, value


def tree_depth(feature: np.ndarray, left: np.ndarray, right: np.ndarray) -> int:
    depth = {0: 0}
    best = 0
    for node in range(len(feature)):
        if node not in depth:
            continue
        if feature[node] >= 0:
            depth[int(left[node])] = depth[node] + 1
            depth[int(right[node])] = depth[node] + 1
            best = max(best, depth[node] + 1)
    return best
