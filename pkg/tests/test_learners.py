import itertools

import numpy as np
import pytest

from twostep import learners
from twostep.errors import DegenerateClass, DimensionMismatch
from twostep.learners import LearnerSpec


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(240, 6))
    logit = 1.5 * X[:, 0] - X[:, 1] + 0.5 * X[:, 2] * X[:, 3]
    y = (rng.random(240) < 1 / (1 + np.exp(-logit))).astype(int)
    return X[:160], y[:160], X[160:], y[160:]


def _first_point(kind):
    return {k: v[0] for k, v in learners.DEFAULT_GRIDS[kind].items()}


@pytest.mark.parametrize("kind", list(learners.KINDS))
def test_every_kind_learns_and_scores_in_unit_interval(kind, data):
    Xtr, ytr, Xte, yte = data
    spec = LearnerSpec(kind, learners.DEFAULT_GRIDS[kind], seed=1)
    m = learners.fit(spec, _first_point(kind), Xtr, ytr)
    s = learners.predict_score(m, Xte)
    assert s.shape == (80,) and np.all((s >= 0) & (s <= 1))
    np.testing.assert_array_equal(learners.predict_label(m, Xte), (s >= 0.5).astype(int))
    assert np.mean(learners.predict_label(m, Xte) == yte) > 0.6
    # deterministic for a fixed seed
    m2 = learners.fit(spec, _first_point(kind), Xtr, ytr)
    np.testing.assert_array_equal(learners.predict_score(m2, Xte), s)
    # single rows give scalars
    assert isinstance(learners.predict_score(m, Xte[0]), float)


@pytest.mark.parametrize("kind", list(learners.KINDS))
def test_record_round_trip(kind, data):
    Xtr, ytr, Xte, _ = data
    spec = LearnerSpec(kind, learners.DEFAULT_GRIDS[kind], seed=2)
    m = learners.fit(spec, _first_point(kind), Xtr, ytr)
    back = learners.from_record(learners.to_record(m))
    np.testing.assert_array_equal(learners.predict_score(back, Xte), learners.predict_score(m, Xte))


def test_label_threshold_is_inclusive():
    spec = LearnerSpec("logistic_regression", {"l2": (1e-4,)})
    m = learners.fit(spec, {"l2": 1e-4}, np.array([[0.0], [0.0], [1.0], [1.0]]), [0, 1, 0, 1])
    # symmetric data: the fitted score is exactly one half everywhere
    assert learners.predict_score(m, np.array([0.5])) == pytest.approx(0.5, abs=1e-9)
    object.__setattr__(m, "state", {**m.state, "w": np.zeros_like(m.state["w"])})
    assert learners.predict_score(m, np.array([0.5])) == 0.5
    assert learners.predict_label(m, np.array([0.5])) == 1


def test_errors(data):
    Xtr, ytr, Xte, _ = data
    spec = LearnerSpec("lda", {"shrinkage": (0.0,)})
    with pytest.raises(DegenerateClass):
        learners.fit(spec, {"shrinkage": 0.0}, Xtr[:5], [1, 1, 1, 1, 0])
    m = learners.fit(spec, {"shrinkage": 0.0}, Xtr, ytr)
    with pytest.raises(DimensionMismatch):
        learners.predict_score(m, Xte[:, :5])
    with pytest.raises(ValueError):
        LearnerSpec("not_a_learner", {"x": (1,)})


def test_lda_falls_back_on_singular_covariance(data):
    Xtr, ytr, _, _ = data
    X = np.hstack([Xtr, Xtr[:, :1]])  # duplicated column
    m = learners.fit(LearnerSpec("lda", {"shrinkage": (0.0,)}), {"shrinkage": 0.0}, X, ytr)
    assert m.flags.get("singular_covariance")
    assert np.all(np.isfinite(learners.predict_score(m, X)))


def test_best_stump_matches_exhaustive_search():
    rng = np.random.default_rng(4)
    for _ in range(20):
        X = rng.integers(0, 6, size=(30, 3)).astype(float)
        t = rng.normal(size=30)
        best, best_gain = None, -np.inf
        for f in range(3):
            vals = np.unique(X[:, f])
            for a, b in zip(vals[:-1], vals[1:]):
                thr = 0.5 * (a + b)
                left = X[:, f] <= thr
                # least-squares fit of a two-valued step = maximal between-group sum of squares
                gain = t[left].sum() ** 2 / left.sum() + t[~left].sum() ** 2 / (~left).sum()
                if gain > best_gain + 1e-12:
                    best, best_gain = (f, thr), gain
        assert learners.best_stump(X, t) == best


def test_random_forest_score_is_tree_vote_fraction(data):
    from twostep import trees

    Xtr, ytr, Xte, _ = data
    spec = LearnerSpec("random_forest", {"n_trees": (100,)})
    m = learners.fit(spec, {"n_trees": 100}, Xtr, ytr)
    votes = np.array([trees.tree_votes(t, Xte) for t in m.state["trees"]])
    assert len(votes) == 100
    np.testing.assert_allclose(learners.predict_score(m, Xte), votes.mean(axis=0))


def test_tune_matches_brute_force_grid(data):
    Xtr, ytr, _, _ = data
    X28 = np.hstack([Xtr] + [np.random.default_rng(9).normal(size=(160, 22))])
    spec = LearnerSpec("penalized_logistic", {"l2": (0.01, 1.0, 100.0)}, seed=3)
    chosen = learners.tune(spec, X28, ytr, folds=3)
    # independent re-evaluation of every grid point with the same folds
    fold_of = learners.stratified_folds(ytr, 3, 3)
    scores = []
    for l2 in (0.01, 1.0, 100.0):
        accs = []
        for f in range(3):
            tr, va = fold_of != f, fold_of == f
            m = learners.fit(spec, {"l2": l2}, X28[tr], ytr[tr], seed=3)
            accs.append(np.mean(learners.predict_label(m, X28[va]) == ytr[va]))
        scores.append(np.mean(accs))
    assert chosen == {"l2": (0.01, 1.0, 100.0)[int(np.argmax(scores))]}


def test_tune_with_single_point_grid_skips_search(data):
    Xtr, ytr, _, _ = data
    spec = LearnerSpec("knn", {"k": (5,)})
    assert learners.tune(spec, Xtr, ytr) == {"k": 5}


def test_stratified_folds_balance_classes():
    y = np.array([1] * 31 + [0] * 29)
    fold_of = learners.stratified_folds(y, 3, seed=0)
    for f in range(3):
        assert abs(y[fold_of == f].sum() - 31 / 3) < 1


def test_default_roster_has_fourteen_distinct_kinds():
    roster = learners.default_roster()
    assert len(roster) == 14 and len({s.kind for s in roster}) == 14
    assert set(learners.ROSTER_TABLE) == set(learners.KINDS)
    for spec in roster:
        points = list(spec.grid_points())
        assert len(points) == len(list(itertools.product(*spec.hyper_grid.values())))
