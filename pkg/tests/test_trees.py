import numpy as np

from twostep import trees


def _gini_split_score(x, y, thr):
    left, right = y[x <= thr], y[x > thr]
    score = 0.0
    for part in (left, right):
        if len(part):
            p = part.mean()
            score += len(part) * 2 * p * (1 - p)
    return score


def test_root_split_is_the_exhaustive_gini_optimum():
    rng = np.random.default_rng(0)
    for _ in range(20):
        X = rng.normal(size=(40, 3)).round(1)
        y = (X[:, 1] + 0.5 * rng.normal(size=40) > 0).astype(float)
        t = trees.grow_tree(X, y, max_depth=1)
        best = min(((_gini_split_score(X[:, f], y, 0.5 * (a + b)), f, 0.5 * (a + b))
                    for f in range(3)
                    for a, b in zip(np.unique(X[:, f])[:-1], np.unique(X[:, f])[1:])),
                   key=lambda s: s[0])
        got = _gini_split_score(X[:, t["feature"][0]], y, t["threshold"][0])
        assert abs(got - best[0]) < 1e-9


def test_unlimited_tree_fits_distinct_rows_exactly():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 4))
    y = rng.integers(0, 2, 60).astype(float)
    t = trees.grow_tree(X, y)
    np.testing.assert_array_equal(trees.tree_votes(t, X), y)


def test_depth_and_leaf_limits():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 5))
    y = (X[:, 0] * X[:, 1] > 0).astype(float)
    t = trees.grow_tree(X, y, max_depth=3, min_leaf=10)
    # a depth-3 tree has at most 15 nodes
    assert len(t["feature"]) <= 15
    leaves = t["feature"] == -1
    assert t["count"][leaves].min() >= 10


def test_pure_node_is_a_leaf():
    X = np.arange(10.0)[:, None]
    t = trees.grow_tree(X, np.ones(10))
    assert len(t["feature"]) == 1 and t["value"][0] == 1.0


def test_forest_score_is_fraction_of_tree_votes():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(120, 6))
    y = (X[:, 0] + X[:, 2] > 0).astype(float)
    forest = trees.grow_forest(X, y, 100, max_features=3, seed=4)
    probe = rng.normal(size=(30, 6))
    votes = np.array([[trees.tree_votes(t, probe[i:i + 1])[0] for t in forest] for i in range(30)])
    np.testing.assert_allclose(trees.forest_score(forest, probe), votes.mean(axis=1))


def test_forest_is_seed_deterministic():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(80, 4))
    y = (X[:, 0] > 0).astype(float)
    a = trees.forest_score(trees.grow_forest(X, y, 20, max_features=2, seed=9), X)
    b = trees.forest_score(trees.grow_forest(X, y, 20, max_features=2, seed=9), X)
    c = trees.forest_score(trees.grow_forest(X, y, 20, max_features=2, seed=10), X)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
