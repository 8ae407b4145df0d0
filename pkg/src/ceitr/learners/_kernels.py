"""Compiled tree-growing kernels.

Both learners grow binary trees over a row subset with the same node
layout: parallel arrays ``feature`` (-1 for a leaf), ``threshold``,
``left``, ``right``, ``label`` and the per-node class weights ``w0``/``w1``.
Rows with ``x <= threshold`` go left.
"""

import math

import numpy as np
from numba import njit

GINI = 0
CONDITIONAL = 1


@njit(cache=True)
def _best_split(X, z, w, idx, start, end, f, min_leaf, min_leaf_weight):
    """Best threshold on feature ``f`` by weighted Gini (equivalently, the
    weighted between-node sum of squares of z).

    Returns (child impurity, threshold, found).  Ties (up to rounding) keep
    the lowest threshold.
    """
    m = end - start
    vals = np.empty(m)
    for i in range(m):
        vals[i] = X[idx[start + i], f]
    order = np.argsort(vals, kind="mergesort")
    tot_w = 0.0
    tot_w1 = 0.0
    for i in range(m):
        r = idx[start + order[i]]
        tot_w += w[r]
        tot_w1 += w[r] * z[r]
    best = np.inf
    best_thr = 0.0
    found = False
    tol = 1e-12 * tot_w
    cw = 0.0
    cw1 = 0.0
    for i in range(m - 1):
        r = idx[start + order[i]]
        cw += w[r]
        cw1 += w[r] * z[r]
        v = vals[order[i]]
        v_next = vals[order[i + 1]]
        if v_next <= v:
            continue
        n_left = i + 1
        if n_left < min_leaf or m - n_left < min_leaf:
            continue
        wl = cw
        wr = tot_w - cw
        if wl < min_leaf_weight or wr < min_leaf_weight or wl <= 0.0 or wr <= 0.0:
            continue
        w1r = tot_w1 - cw1
        imp = 2.0 * (cw1 * (wl - cw1) / wl + w1r * (wr - w1r) / wr)
        if imp < best - tol:
            best = imp
            best_thr = 0.5 * (v + v_next)
            found = True
    return best, best_thr, found


@njit(cache=True)
def permutation_statistic(xcol, z, w):
    """Standardised statistic T = sum(w x z) under permutations of z.

    Weights act as case (frequency) weights; the exact permutation moments
    are E = (sum w x)(sum w z) / W and
    Var = W / (W - 1) * V_z * (sum w x^2 - (sum w x)^2 / W),
    with W = sum w and V_z the weighted variance of z.
    """
    n = xcol.shape[0]
    sw = 0.0
    swx = 0.0
    swz = 0.0
    swxx = 0.0
    t = 0.0
    for i in range(n):
        sw += w[i]
        swx += w[i] * xcol[i]
        swz += w[i] * z[i]
        swxx += w[i] * xcol[i] * xcol[i]
        t += w[i] * xcol[i] * z[i]
    if sw <= 1.0:
        return 0.0
    zbar = swz / sw
    vz = 0.0
    for i in range(n):
        vz += w[i] * (z[i] - zbar) ** 2
    vz /= sw
    sxx = swxx - swx * swx / sw
    var = sw / (sw - 1.0) * vz * sxx
    if var <= 1e-300 or sxx <= 1e-12 * max(swxx, 1e-300):
        return 0.0
    return (t - swx * swz / sw) / math.sqrt(var)


@njit(cache=True)
def grow_tree(X, z, w, rows, mode, max_depth, min_split, min_leaf, min_leaf_weight,
              mtry, mincriterion, seed, weighted_stat=True):
    n_rows = rows.shape[0]
    p = X.shape[1]
    cap = 2 * n_rows + 1
    feature = -np.ones(cap, dtype=np.int64)
    threshold = np.zeros(cap)
    left = -np.ones(cap, dtype=np.int64)
    right = -np.ones(cap, dtype=np.int64)
    label = np.zeros(cap, dtype=np.int64)
    w0 = np.zeros(cap)
    w1 = np.zeros(cap)
    idx = rows.copy()
    np.random.seed(seed)

    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_rows
    st_depth[0] = 0
    top = 1
    n_nodes = 1
    vals = np.empty(n_rows)
    zz = np.empty(n_rows)
    ww = np.empty(n_rows)
    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        m = end - start
        nw0 = 0.0
        nw1 = 0.0
        for i in range(start, end):
            r = idx[i]
            if z[r] == 1:
                nw1 += w[r]
            else:
                nw0 += w[r]
        w0[node] = nw0
        w1[node] = nw1
        label[node] = 1 if nw1 > nw0 else 0
        if depth >= max_depth or m < min_split or nw0 <= 0.0 or nw1 <= 0.0:
            continue

        split_f = -1
        split_thr = 0.0
        if mode == GINI:
            parent = 2.0 * nw1 * nw0 / (nw0 + nw1)
            # a later feature must beat the incumbent by more than rounding noise
            tol = 1e-12 * (nw0 + nw1)
            best = parent - tol
            for f in range(p):
                imp, thr, ok = _best_split(X, z, w, idx, start, end, f, min_leaf, min_leaf_weight)
                if ok and imp < best - tol:
                    best = imp
                    split_f = f
                    split_thr = thr
        else:
            perm = np.random.permutation(p)[:mtry]
            stats = np.empty(mtry)
            # case weights rescaled to sum to the node size: scale-free statistic
            tot = nw0 + nw1
            for i in range(m):
                r = idx[start + i]
                zz[i] = z[r]
                ww[i] = (w[r] * m / tot) if weighted_stat else 1.0
            for k in range(mtry):
                f = perm[k]
                for i in range(m):
                    vals[i] = X[idx[start + i], f]
                stats[k] = abs(permutation_statistic(vals[:m], zz[:m], ww[:m]))
            order = np.argsort(-stats, kind="mergesort")
            for k in range(mtry):
                c = stats[order[k]]
                p_adj = min(1.0, mtry * math.erfc(c / math.sqrt(2.0)))
                if 1.0 - p_adj < mincriterion:
                    break
                f = perm[order[k]]
                imp, thr, ok = _best_split(X, z, w, idx, start, end, f, min_leaf, min_leaf_weight)
                if ok:
                    split_f = f
                    split_thr = thr
                    break
        if split_f < 0:
            continue

        # partition idx[start:end] in place, left block first
        i = start
        j = end - 1
        while i <= j:
            if X[idx[i], split_f] <= split_thr:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        mid = i
        feature[node] = split_f
        threshold[node] = split_thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        # push right first so the left subtree is numbered first
        st_node[top] = rc
        st_start[top] = mid
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lc
        st_start[top] = start
        st_end[top] = mid
        st_depth[top] = depth + 1
        top += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            label[:n_nodes], w0[:n_nodes], w1[:n_nodes])


@njit(cache=True)
def apply_tree(X, feature, threshold, left, right):
    """Leaf index reached by each row."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
