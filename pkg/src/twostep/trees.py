"""CART classification trees (Gini) with a compiled split search.

Trees are stored as flat arrays so they serialize cleanly and can be
evaluated without Python recursion. Node 0 is the root; a node with
``feature == -1`` is a leaf and ``value`` holds its positive-class fraction.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _best_split(X, y, idx, features, min_leaf):
    n = idx.shape[0]
    best_score = np.inf
    best_feature = -1
    best_threshold = 0.0
    vals = np.empty(n)
    labs = np.empty(n)
    for f in features:
        for i in range(n):
            vals[i] = X[idx[i], f]
            labs[i] = y[idx[i]]
        # order within runs of equal values never matters: splits fall between distinct values
        order = np.argsort(vals)
        total_pos = 0.0
        for i in range(n):
            total_pos += labs[i]
        pos_left = 0.0
        for i in range(n - 1):
            pos_left += labs[order[i]]
            n_left = i + 1
            n_right = n - n_left
            if vals[order[i]] == vals[order[i + 1]]:
                continue
            if n_left < min_leaf or n_right < min_leaf:
                continue
            pos_right = total_pos - pos_left
            # n * weighted Gini impurity of the two children
            score = (2.0 * pos_left * (n_left - pos_left) / n_left
                     + 2.0 * pos_right * (n_right - pos_right) / n_right)
            if score < best_score:
                best_score = score
                best_feature = f
                best_threshold = 0.5 * (vals[order[i]] + vals[order[i + 1]])
    return best_feature, best_threshold


@njit(cache=True)
def _grow(X, y, max_depth, min_leaf, max_features, seed):
    np.random.seed(seed)
    n, p = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)

    all_features = np.arange(p)
    stack_nodes = [0]
    stack_idx = [np.arange(n)]
    stack_depth = [0]
    n_nodes = 1
    while len(stack_nodes) > 0:
        node = stack_nodes.pop()
        idx = stack_idx.pop()
        depth = stack_depth.pop()
        m = idx.shape[0]
        pos = 0.0
        for i in range(m):
            pos += y[idx[i]]
        value[node] = pos / m
        count[node] = m
        if pos == 0.0 or pos == m or m < 2 * min_leaf:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue
        if max_features < p:
            cand = np.random.permutation(all_features)[:max_features]
        else:
            cand = all_features
        f, thr = _best_split(X, y, idx, cand, min_leaf)
        if f < 0:
            continue
        mask = np.empty(m, dtype=np.bool_)
        for i in range(m):
            mask[i] = X[idx[i], f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        # right pushed first so the left subtree is expanded first
        stack_nodes.append(right[node])
        stack_idx.append(idx[~mask])
        stack_depth.append(depth + 1)
        stack_nodes.append(left[node])
        stack_idx.append(idx[mask])
        stack_depth.append(depth + 1)
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), count[:n_nodes].copy())


@njit(cache=True)
def _apply(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def grow_tree(X, y, max_depth=None, min_leaf=1, max_features=None, seed=0):
    """Grow one tree on (X, y). ``max_features`` features are sampled at each split."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    p = X.shape[1]
    mf = p if max_features is None else int(min(max(1, max_features), p))
    depth = -1 if max_depth is None else int(max_depth)
    f, t, l, r, v, c = _grow(X, y, depth, int(min_leaf), mf, int(seed) % (2**32))
    return {"feature": f, "threshold": t, "left": l, "right": r, "value": v, "count": c}


def tree_leaf_values(tree, X):
    """Positive-class fraction of the leaf each row lands in."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    return _apply(tree["feature"], tree["threshold"], tree["left"], tree["right"], tree["value"], X)


def tree_votes(tree, X):
    """Hard per-tree prediction: 1 where the leaf fraction is >= 0.5."""
    return (tree_leaf_values(tree, X) >= 0.5).astype(np.float64)


def grow_forest(X, y, n_trees, max_depth=None, min_leaf=1, max_features=None,
                bootstrap=True, seed=0):
    """Random forest: bootstrap rows per tree, sample features per split."""
    rng = np.random.default_rng(seed)
    n = len(y)
    trees = []
    for _ in range(n_trees):
        tree_seed = int(rng.integers(2**31 - 1))
        if bootstrap:
            rows = rng.integers(0, n, size=n)
            Xb, yb = X[rows], y[rows]
        else:
            Xb, yb = X, y
        trees.append(grow_tree(Xb, yb, max_depth, min_leaf, max_features, tree_seed))
    return trees


def forest_votes(trees, X):
    """Matrix of per-tree votes, shape (n_trees, n_rows)."""
    return np.array([tree_votes(t, X) for t in trees])


def forest_score(trees, X):
    return forest_votes(trees, X).mean(axis=0)
