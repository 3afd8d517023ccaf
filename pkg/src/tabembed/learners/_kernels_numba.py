"""Numba-compiled tree-building kernels: the default hot path.

Mirrors _kernels_numpy exactly (presorted columns, same split
candidates, tie rules, node id allocation, splitmix64 feature subsets);
only float accumulation order may differ on tied values.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_U = np.uint64


@njit(cache=True, inline="always")
def _splitmix64(state):
    state = state + _U(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    z = z ^ (z >> _U(31))
    return state, z


@njit(cache=True)
def _feature_order(d, n_pick, seed, node_uid):
    feats = np.arange(d, dtype=np.int64)
    if n_pick >= d:
        return feats
    state = _U(seed) ^ (_U(node_uid) * _U(0x9E3779B97F4A7C15))
    for i in range(n_pick):
        state, z = _splitmix64(state)
        j = i + np.int64(z % _U(d - i))
        tmp = feats[i]
        feats[i] = feats[j]
        feats[j] = tmp
    return feats[:n_pick]


@njit(cache=True)
def build_tree_logistic(X, g, h, max_depth, lam, mcw):
    n, d = X.shape
    max_nodes = 2 * n + 1
    feat = np.full(max_nodes, -1, dtype=np.int32)
    thr = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes, dtype=np.float64)
    row_pred = np.zeros(n, dtype=np.float64)

    # S[f, lo:hi] = rows of one node, sorted by feature f
    S = np.empty((d, n), dtype=np.int64)
    col = np.empty(n, dtype=np.float64)
    for f in range(d):
        for i in range(n):
            col[i] = X[i, f]
        S[f] = np.argsort(col)
    buf = np.empty(n, dtype=np.int64)

    st_node = np.empty(max_nodes, dtype=np.int64)
    st_lo = np.empty(max_nodes, dtype=np.int64)
    st_hi = np.empty(max_nodes, dtype=np.int64)
    st_depth = np.empty(max_nodes, dtype=np.int64)
    st_node[0], st_lo[0], st_hi[0], st_depth[0] = 0, 0, n, 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        depth = st_depth[sp]
        m = hi - lo

        G = 0.0
        H = 0.0
        for k in range(lo, hi):
            r = S[0, k]
            G += g[r]
            H += h[r]

        best = -1
        best_gain = 1e-12
        best_thr = 0.0
        if depth < max_depth and m >= 2:
            parent = G * G / (H + lam)
            for f in range(d):
                gl = 0.0
                hl = 0.0
                for k in range(lo, hi - 1):
                    r = S[f, k]
                    gl += g[r]
                    hl += h[r]
                    v0 = X[r, f]
                    v1 = X[S[f, k + 1], f]
                    if v0 == v1:
                        continue
                    hr = H - hl
                    if hl < mcw or hr < mcw:
                        continue
                    gr = G - gl
                    gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent
                    if gain > best_gain:
                        best_gain = gain
                        best = f
                        best_thr = 0.5 * (v0 + v1)

        if best < 0:
            leaf = -G / (H + lam)
            value[node] = leaf
            for k in range(lo, hi):
                row_pred[S[0, k]] = leaf
            continue

        nl = 0
        for f in range(d):
            nl_f = 0
            nr = 0
            for k in range(lo, hi):
                r = S[f, k]
                if X[r, best] < best_thr:
                    S[f, lo + nl_f] = r
                    nl_f += 1
                else:
                    buf[nr] = r
                    nr += 1
            for k in range(nr):
                S[f, lo + nl_f + k] = buf[k]
            nl = nl_f

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feat[node] = best
        thr[node] = best_thr
        left[node] = lid
        right[node] = rid
        st_node[sp], st_lo[sp], st_hi[sp], st_depth[sp] = rid, lo + nl, hi, depth + 1
        sp += 1
        st_node[sp], st_lo[sp], st_hi[sp], st_depth[sp] = lid, lo, lo + nl, depth + 1
        sp += 1

    return (
        feat[:n_nodes],
        thr[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        row_pred,
    )


@njit(cache=True)
def predict_tree(X, feat, thr, left, right, value):
    n = X.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        node = 0
        while feat[node] >= 0:
            if X[i, feat[node]] < thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True)
def build_tree_gini(X, y, max_depth, max_features, seed):
    n, d = X.shape
    n_pick = max(1, int(np.ceil(max_features * d)))
    max_nodes = 2 * n + 1
    feat = np.full(max_nodes, -1, dtype=np.int32)
    thr = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes, dtype=np.float64)

    idx = np.arange(n, dtype=np.int64)
    buf = np.empty(n, dtype=np.int64)
    st_node = np.empty(max_nodes, dtype=np.int64)
    st_lo = np.empty(max_nodes, dtype=np.int64)
    st_hi = np.empty(max_nodes, dtype=np.int64)
    st_depth = np.empty(max_nodes, dtype=np.int64)
    st_node[0], st_lo[0], st_hi[0], st_depth[0] = 0, 0, n, 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        depth = st_depth[sp]
        m = hi - lo

        s = 0.0
        for k in range(lo, hi):
            s += y[idx[k]]
        value[node] = s / m

        if depth >= max_depth or m < 2 or s == 0.0 or s == m:
            continue

        parent = s * (m - s) / m
        best_score = np.inf
        best_f = -1
        best_thr = 0.0
        vals = np.empty(m, dtype=np.float64)
        feats = _feature_order(d, n_pick, seed, node)
        for fi in range(len(feats)):
            f = feats[fi]
            for k in range(m):
                vals[k] = X[idx[lo + k], f]
            order = np.argsort(vals)
            if vals[order[0]] == vals[order[m - 1]]:
                continue
            sl = 0.0
            for k in range(m - 1):
                sl += y[idx[lo + order[k]]]
                if vals[order[k]] == vals[order[k + 1]]:
                    continue
                ml = float(k + 1)
                mr = float(m - k - 1)
                sr = s - sl
                score = sl * (ml - sl) / ml + sr * (mr - sr) / mr
                if score < best_score and score < parent - 1e-12:
                    best_score = score
                    best_f = f
                    best_thr = 0.5 * (vals[order[k]] + vals[order[k + 1]])

        if best_f < 0:
            continue

        nl = 0
        nr = 0
        for k in range(lo, hi):
            r = idx[k]
            if X[r, best_f] < best_thr:
                idx[lo + nl] = r
                nl += 1
            else:
                buf[nr] = r
                nr += 1
        for k in range(nr):
            idx[lo + nl + k] = buf[k]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feat[node] = best_f
        thr[node] = best_thr
        left[node] = lid
        right[node] = rid
        st_node[sp], st_lo[sp], st_hi[sp], st_depth[sp] = rid, lo + nl, hi, depth + 1
        sp += 1
        st_node[sp], st_lo[sp], st_hi[sp], st_depth[sp] = lid, lo, lo + nl, depth + 1
        sp += 1

    return (
        feat[:n_nodes],
        thr[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
    )
