"""Exact-greedy regression tree builder on presorted feature lists.

Each open leaf owns the same contiguous segment in every row of the
presorted index matrix; splitting a leaf stably partitions that segment
in all rows. Split gain is the usual second-order score
``GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)`` and candidate thresholds
lie between consecutive distinct values, so no binning happens. Ties go
to the lower feature index and then the lower threshold.
"""
from __future__ import annotations

import numba
import numpy as np

from ..rng import stream_key, uniform_at

LEAF = -1


@numba.njit(cache=True, nogil=True)
def _best_split(Xt, S, g, h, cnt, s, e, feats, min_leaf, lam):
    G = 0.0
    H = 0.0
    C = 0.0
    row0 = S[0]
    for k in range(s, e):
        i = row0[k]
        G += g[i]
        H += h[i]
        C += cnt[i]
    parent = G * G / (H + lam)
    best_gain = 0.0
    best_f = -1
    best_thr = 0.0
    best_nl = 0
    for fi in range(len(feats)):
        f = feats[fi]
        row = S[f]
        x = Xt[f]
        gl = 0.0
        hl = 0.0
        cl = 0.0
        for k in range(s, e - 1):
            i = row[k]
            gl += g[i]
            hl += h[i]
            cl += cnt[i]
            xv = x[i]
            if xv == x[row[k + 1]]:
                continue
            if cl < min_leaf or C - cl < min_leaf:
                continue
            gr = G - gl
            hr = H - hl
            if hl + lam <= 0.0 or hr + lam <= 0.0:
                continue
            gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent
            if gain > best_gain + 1e-12 * (1.0 + abs(best_gain)):
                best_gain = gain
                best_f = f
                best_thr = xv
                best_nl = k - s + 1
    return best_gain, best_f, best_thr, best_nl, G, H, C


@numba.njit(cache=True, nogil=True)
def _pick_features(n_features, mtry, key, node):
    if mtry <= 0 or mtry >= n_features:
        return np.arange(n_features)
    perm = np.arange(n_features)
    for j in range(mtry):
        u = uniform_at(key, node * n_features + j)
        r = j + int(u * (n_features - j))
        if r >= n_features:
            r = n_features - 1
        tmp = perm[j]
        perm[j] = perm[r]
        perm[r] = tmp
    return np.sort(perm[:mtry])


@numba.njit(cache=True, nogil=True)
def build_tree(Xt, S, g, h, cnt, max_leaves, max_depth, min_leaf, min_split, lam, mtry, seed, best_first):
    """Grow one tree; returns (feature, threshold, left, right, value, gain).

    ``S`` is a (n_features, m) matrix of sample indices, each row sorted by
    that feature; it is overwritten. Leaf values are ``-G / (H + lam)``.
    """
    n_features, m = S.shape
    cap = 2 * max_leaves + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    gain_out = np.zeros(cap)
    seg_s = np.zeros(cap, dtype=np.int64)
    seg_e = np.zeros(cap, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    cand_gain = np.zeros(cap)
    cand_f = np.full(cap, -1, dtype=np.int64)
    cand_thr = np.zeros(cap)
    cand_nl = np.zeros(cap, dtype=np.int64)
    is_open = np.zeros(cap, dtype=np.bool_)
    go_left = np.zeros(len(g), dtype=np.bool_)
    buf = np.empty(m, dtype=S.dtype)
    key = stream_key(np.uint64(seed), np.uint64(7), np.uint64(0), np.uint64(0))

    n_nodes = 1
    seg_s[0] = 0
    seg_e[0] = m
    stack = np.empty(cap, dtype=np.int64)
    n_stack = 0

    # evaluate node 0
    nodes_to_eval = np.empty(2, dtype=np.int64)
    nodes_to_eval[0] = 0
    n_eval = 1
    n_leaves = 1
    while True:
        for q in range(n_eval):
            nd = nodes_to_eval[q]
            s = seg_s[nd]
            e = seg_e[nd]
            feats = _pick_features(n_features, mtry, key, nd)
            gn, f, thr, nl, G, H, C = _best_split(Xt, S, g, h, cnt, s, e, feats, min_leaf, lam)
            value[nd] = -G / (H + lam) if H + lam > 0 else 0.0
            splittable = f >= 0 and depth[nd] < max_depth and C >= min_split
            if splittable:
                cand_gain[nd] = gn
                cand_f[nd] = f
                cand_thr[nd] = thr
                cand_nl[nd] = nl
                is_open[nd] = True
                stack[n_stack] = nd
                n_stack += 1
        n_eval = 0
        if n_leaves >= max_leaves or n_stack == 0:
            break
        # choose the leaf to split
        if best_first:
            pick = -1
            pg = -1.0
            pos = -1
            for j in range(n_stack):
                nd = stack[j]
                if cand_gain[nd] > pg or (cand_gain[nd] == pg and nd < pick):
                    pg = cand_gain[nd]
                    pick = nd
                    pos = j
            stack[pos] = stack[n_stack - 1]
            n_stack -= 1
        else:
            n_stack -= 1
            pick = stack[n_stack]
        is_open[pick] = False
        s = seg_s[pick]
        e = seg_e[pick]
        f = cand_f[pick]
        nl = cand_nl[pick]
        for k in range(s, s + nl):
            go_left[S[f, k]] = True
        for ff in range(n_features):
            row = S[ff]
            a = s
            b = 0
            for k in range(s, e):
                i = row[k]
                if go_left[i]:
                    row[a] = i
                    a += 1
                else:
                    buf[b] = i
                    b += 1
            for k in range(b):
                row[a + k] = buf[k]
        for k in range(s, s + nl):
            go_left[S[f, k]] = False
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[pick] = f
        threshold[pick] = cand_thr[pick]
        gain_out[pick] = cand_gain[pick]
        left[pick] = lc
        right[pick] = rc
        seg_s[lc] = s
        seg_e[lc] = s + nl
        seg_s[rc] = s + nl
        seg_e[rc] = e
        depth[lc] = depth[pick] + 1
        depth[rc] = depth[pick] + 1
        n_leaves += 1
        nodes_to_eval[0] = lc
        nodes_to_eval[1] = rc
        n_eval = 2
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        gain_out[:n_nodes].copy(),
    )


@numba.njit(cache=True, nogil=True)
def predict_forest(X, offsets, feature, threshold, left, right, value, scale, out):
    """Add ``scale * leaf value`` of every packed tree to ``out`` (one entry per row of X)."""
    n_trees = len(offsets) - 1
    # rows outermost: one row stays in cache while all trees visit it
    for r in range(X.shape[0]):
        for t in range(n_trees):
            base = offsets[t]
            nd = 0
            while feature[base + nd] != -1:
                if X[r, feature[base + nd]] <= threshold[base + nd]:
                    nd = left[base + nd]
                else:
                    nd = right[base + nd]
            out[r] += scale * value[base + nd]


@numba.njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right, value, out):
    for r in range(X.shape[0]):
        nd = 0
        while feature[nd] != -1:
            if X[r, feature[nd]] <= threshold[nd]:
                nd = left[nd]
            else:
                nd = right[nd]
        out[r] = value[nd]


def presort(Xt: np.ndarray) -> np.ndarray:
    """Row f holds sample indices ordered by feature f (stable)."""
    return np.argsort(Xt, axis=1, kind="stable").astype(np.int64)


@numba.njit(cache=True, nogil=True)
def tree_values(X, offsets, feature, threshold, left, right, value, trees, out):
    """Leaf value of tree ``trees[j]`` for every row into ``out[:, j]``."""
    for r in range(X.shape[0]):
        for j in range(len(trees)):
            base = offsets[trees[j]]
            nd = 0
            while feature[base + nd] != -1:
                if X[r, feature[base + nd]] <= threshold[base + nd]:
                    nd = left[base + nd]
                else:
                    nd = right[base + nd]
            out[r, j] = value[base + nd]
