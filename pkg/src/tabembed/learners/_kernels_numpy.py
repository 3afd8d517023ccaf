"""Pure-numpy tree-building kernels: the fallback path when numba is
unavailable or disabled via TABEMBED_NO_NUMBA=1.

Semantics match the numba kernels: exact greedy splits over presorted
columns, candidate thresholds at boundaries between distinct values,
first (feature, boundary) wins ties, stable partitions.  Floating-point
results can differ from the numba path by accumulation order only.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(state: int):
    """One step of the splitmix64 generator; returns (next_state, draw)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z = z ^ (z >> 31)
    return state, z


def _feature_order(d: int, n_pick: int, seed: int, node_uid: int):
    if n_pick >= d:
        return np.arange(d, dtype=np.int64)
    feats = list(range(d))
    state = (seed ^ (node_uid * 0x9E3779B97F4A7C15)) & _MASK64
    for i in range(n_pick):
        state, z = splitmix64(state)
        j = i + z % (d - i)
        feats[i], feats[j] = feats[j], feats[i]
    return np.asarray(feats[:n_pick], dtype=np.int64)


def build_tree_logistic(X, g, h, max_depth, lam, mcw):
    """Grow one second-order regression tree on gradients/hessians.

    Columns are argsorted once at the root; stable partitions keep every
    column's node slice sorted, so split scans are linear per node.

    Returns (feature, threshold, left, right, value, row_pred) where
    feature is -1 at leaves, value holds the unscaled leaf weight
    -G/(H+lam), and row_pred gives each training row's leaf value.
    """
    n, d = X.shape
    max_nodes = 2 * n + 1
    feat = np.full(max_nodes, -1, dtype=np.int32)
    thr = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes, dtype=np.float64)
    row_pred = np.zeros(n, dtype=np.float64)

    # S[f, lo:hi] = rows of one node, sorted by feature f
    S = np.ascontiguousarray(np.argsort(X, axis=0, kind="quicksort").T)
    cols = np.arange(d)[:, None]

    n_nodes = 1
    stack = [(0, 0, n, 0)]  # (node id, lo, hi, depth)
    while stack:
        node, lo, hi, depth = stack.pop()
        m = hi - lo
        rows0 = S[0, lo:hi]
        G = float(np.cumsum(g[rows0])[-1])
        H = float(np.cumsum(h[rows0])[-1])

        best = -1
        best_thr = 0.0
        if depth < max_depth and m >= 2:
            parent = G * G / (H + lam)
            rows = S[:, lo:hi]
            sv = X[rows, cols]
            gl = np.cumsum(g[rows], axis=1)[:, :-1]
            hl = np.cumsum(h[rows], axis=1)[:, :-1]
            hr = H - hl
            ok = (sv[:, :-1] != sv[:, 1:]) & (hl >= mcw) & (hr >= mcw)
            if ok.any():
                gr = G - gl
                gain = np.where(
                    ok,
                    gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent,
                    -np.inf,
                )
                flat = int(np.argmax(gain))  # C order: feature-major, first max
                if gain.flat[flat] > 1e-12:
                    best, k = divmod(flat, m - 1)
                    best_thr = 0.5 * (sv[best, k] + sv[best, k + 1])

        if best < 0:
            value[node] = -G / (H + lam)
            row_pred[rows0] = value[node]
            continue

        go_left = X[:, best] < best_thr
        nl = int(go_left[rows0].sum())
        for f in range(d):
            sl = S[f, lo:hi].copy()
            mask = go_left[sl]
            S[f, lo : lo + nl] = sl[mask]
            S[f, lo + nl : hi] = sl[~mask]

        lid, rid = n_nodes, n_nodes + 1
        n_nodes += 2
        feat[node] = best
        thr[node] = best_thr
        left[node] = lid
        right[node] = rid
        stack.append((rid, lo + nl, hi, depth + 1))
        stack.append((lid, lo, lo + nl, depth + 1))

    return (
        feat[:n_nodes],
        thr[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        row_pred,
    )


def predict_tree(X, feat, thr, left, right, value):
    """Leaf value per row, walking from the root vector-style."""
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    active = feat[node] >= 0
    while active.any():
        rows = np.nonzero(active)[0]
        cur = node[rows]
        go_left = X[rows, feat[cur]] < thr[cur]
        node[rows] = np.where(go_left, left[cur], right[cur])
        active = feat[node] >= 0
    return value[node]


def _best_split_gini(vals, y_node, s, m, parent):
    order = np.argsort(vals, kind="quicksort")
    sv = vals[order]
    if sv[0] == sv[-1]:
        return np.inf, 0.0
    sl = np.cumsum(y_node[order])[:-1]
    ml = np.arange(1, m, dtype=np.float64)
    mr = m - ml
    sr = s - sl
    boundary = sv[:-1] != sv[1:]
    score = np.where(
        boundary,
        sl * (ml - sl) / ml + sr * (mr - sr) / mr,
        np.inf,
    )
    k = int(np.argmin(score))
    if score[k] >= parent - 1e-12:
        return np.inf, 0.0
    return float(score[k]), 0.5 * (sv[k] + sv[k + 1])


def build_tree_gini(X, y, max_depth, max_features, seed):
    """Grow one CART classification tree on Gini impurity.

    Leaves hold the positive-class fraction.  `max_features` is the
    fraction of features examined per split, drawn with splitmix64 from
    (seed, node id) so the numba path sees identical subsets.
    """
    n, d = X.shape
    n_pick = max(1, int(math.ceil(max_features * d)))
    max_nodes = 2 * n + 1
    feat = np.full(max_nodes, -1, dtype=np.int32)
    thr = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes, dtype=np.float64)

    idx = np.arange(n, dtype=np.int64)
    n_nodes = 1
    stack = [(0, idx, 0)]
    while stack:
        node, rows, depth = stack.pop()
        y_node = y[rows]
        m = len(rows)
        s = float(np.sum(y_node))
        value[node] = s / m

        if depth >= max_depth or m < 2 or s == 0.0 or s == m:
            continue

        parent = s * (m - s) / m
        best_score = np.inf
        best_f = -1
        best_thr = 0.0
        for f in _feature_order(d, n_pick, seed, node):
            score, t = _best_split_gini(X[rows, f], y_node, s, m, parent)
            if score < best_score:
                best_score, best_f, best_thr = score, int(f), t

        if best_f < 0:
            continue

        mask = X[rows, best_f] < best_thr
        lid, rid = n_nodes, n_nodes + 1
        n_nodes += 2
        feat[node] = best_f
        thr[node] = best_thr
        left[node] = lid
        right[node] = rid
        stack.append((rid, rows[~mask], depth + 1))
        stack.append((lid, rows[mask], depth + 1))

    return (
        feat[:n_nodes],
        thr[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
    )
