"""Pure-numpy reference implementation of the tree kernels.

Packed tree-array layout shared by both backends: a tree (or a whole forest
concatenated tree after tree) is a set of parallel node arrays

    feature      int32   split predictor; -1 marks a leaf, -2 a free slot
    threshold    float64 numeric rule: go left iff x <= threshold
    missing_left uint8   NaN routing flag, 1 = left
    left, right  int32   child indices (absolute in the packed arrays)
    cat_start    int64   offset into cat_codes, -1 for numeric rules/leaves
    cat_len      int32   subset length; > 0 marks a categorical rule
    cat_codes    float64 sorted code values per categorical rule segment
    leaf_value   float64 leaf prediction (trees) or anything per-node

Categorical rule: go left iff x is one of the node's cat_codes segment.
All accumulations run in row order so the compiled backend can reproduce
them bit for bit.
"""

import numpy as np


def route_rows(
    X,
    rows,
    feature,
    threshold,
    missing_left,
    left,
    right,
    cat_start,
    cat_len,
    cat_codes,
    start=0,
):
    """Route `rows` of X through the tree rooted at node `start`.

    Returns the leaf node index (int32) reached by each row.
    """
    rows = np.asarray(rows, dtype=np.int64)
    out = np.empty(rows.shape[0], dtype=np.int32)
    if rows.shape[0] == 0:
        return out
    # iterative worklist over (node, positions into `rows`)
    stack = [(int(start), np.arange(rows.shape[0], dtype=np.int64))]
    while stack:
        node, pos = stack.pop()
        while feature[node] >= 0:
            x = X[rows[pos], feature[node]]
            nan = np.isnan(x)
            if cat_len[node] > 0:
                seg = cat_codes[cat_start[node] : cat_start[node] + cat_len[node]]
                go_left = np.isin(x, seg)
            else:
                with np.errstate(invalid="ignore"):
                    go_left = x <= threshold[node]
            if missing_left[node]:
                go_left |= nan
            else:
                go_left &= ~nan
            pos_left = pos[go_left]
            pos_right = pos[~go_left]
            if pos_right.shape[0]:
                stack.append((int(right[node]), pos_right))
            node = int(left[node])
            pos = pos_left
            if pos.shape[0] == 0:
                break
        if pos.shape[0]:
            out[pos] = node
    return out


def leaf_sums(leaf_idx, values, n_nodes):
    """Per-node row counts and value sums for a leaf assignment vector."""
    leaf_idx = np.asarray(leaf_idx)
    counts = np.bincount(leaf_idx, minlength=n_nodes).astype(np.int64)
    sums = np.bincount(leaf_idx, weights=values, minlength=n_nodes)
    return counts, sums


def forest_fit(
    X,
    feature,
    threshold,
    missing_left,
    left,
    right,
    cat_start,
    cat_len,
    cat_codes,
    leaf_value,
    tree_start,
    tree_lo,
    tree_hi,
):
    """Sum of leaf values over trees [tree_lo, tree_hi) for every row of X."""
    n = X.shape[0]
    out = np.zeros(n, dtype=np.float64)
    rows = np.arange(n, dtype=np.int64)
    for t in range(tree_lo, tree_hi):
        leaves = route_rows(
            X,
            rows,
            feature,
            threshold,
            missing_left,
            left,
            right,
            cat_start,
            cat_len,
            cat_codes,
            start=int(tree_start[t]),
        )
        out += leaf_value[leaves]
    return out


def gini_best_split(x, y, n_classes):
    """Best Gini split of one predictor column.

    Missing values always go left. Candidates are boundaries between distinct
    observed values; the threshold is their midpoint. Returns
    ``(found, threshold, score)`` where score is the weighted child impurity
    ``n - sum_child (sum_k count_k^2) / n_child`` (lower is better) and ties
    go to the smallest threshold.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[0]
    obs = ~np.isnan(x)
    xo = x[obs]
    yo = y[obs]
    m = xo.shape[0]
    if m < 2:
        return False, 0.0, np.inf
    order = np.argsort(xo, kind="stable")
    xs = xo[order]
    ys = yo[order]
    boundary = np.nonzero(xs[:-1] < xs[1:])[0]  # split after position i
    if boundary.shape[0] == 0:
        return False, 0.0, np.inf

    miss_counts = np.bincount(y[~obs], minlength=n_classes).astype(np.int64)
    onehot = np.zeros((m, n_classes), dtype=np.int64)
    onehot[np.arange(m), ys] = 1
    prefix = np.cumsum(onehot, axis=0)  # class counts among first i+1 sorted rows

    left_counts = prefix[boundary] + miss_counts  # (n_cand, K)
    total = prefix[-1] + miss_counts
    right_counts = total - left_counts
    nl = left_counts.sum(axis=1).astype(np.float64)
    nr = right_counts.sum(axis=1).astype(np.float64)

    # accumulate sum_k count^2 / n_child one class at a time so the float
    # op order matches the compiled backend exactly
    ql = np.zeros(boundary.shape[0], dtype=np.float64)
    qr = np.zeros(boundary.shape[0], dtype=np.float64)
    for k in range(n_classes):
        lk = left_counts[:, k].astype(np.float64)
        rk = right_counts[:, k].astype(np.float64)
        ql = ql + (lk * lk) / nl
        qr = qr + (rk * rk) / nr
    scores = (np.float64(n) - ql) - qr

    best = int(np.argmin(scores))  # first minimum = smallest threshold
    lo = xs[boundary[best]]
    hi = xs[boundary[best] + 1]
    thr = (lo + hi) * 0.5
    if thr >= hi:  # midpoint rounded onto the upper value
        thr = lo
    return True, float(thr), float(scores[best])
