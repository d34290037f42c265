"""Voting, single-layer stacking and two-step stacking.

A roster is a list of ``(LearnerSpec, hyperparams)`` pairs whose
hyperparameters have already been tuned. Meta-combiners consume base
*scores* in [0, 1] unless a ``*_uses_labels`` flag asks for thresholded
labels, which reproduces the literal indicator form of the voting rules.
"""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import learners, serialize, trees
from .errors import (
    ArityMismatch,
    DegenerateClass,
    DimensionMismatch,
    EmptyVote,
    PartitionLeak,
    VersionMismatch,
)

COMBINER_KINDS = ("random_forest", "linear_least_squares", "uniform")
META_TREES = 200
META_DEPTH = 6


# ----------------------------------------------------------------------------
# voting rules

def majority_vote(labels):
    c = np.asarray(labels, dtype=np.int64).ravel()
    if c.size == 0:
        raise EmptyVote("no votes")
    # 2 * sum >= L is the integer form of mean >= 0.5
    return int(2 * c.sum() >= c.size)


def weighted_vote(labels, weights):
    c = np.asarray(labels, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if c.size == 0:
        raise EmptyVote("no votes")
    if c.size != w.size:
        raise ArityMismatch(f"{c.size} labels for {w.size} weights")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    return int(float(np.dot(w, c)) >= 0.5)


# ----------------------------------------------------------------------------
# meta-combiners

@dataclass(frozen=True, eq=False)
class MetaCombiner:
    kind: str
    state: dict
    input_arity: int


def derive_seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def uniform_combiner(arity):
    """Fixed equal weights 1/arity; the majority-vote form of the weighted sum."""
    return MetaCombiner("uniform", {"w": np.full(arity, 1.0 / arity)}, arity)


def fit_meta(outputs, labels, kind="random_forest", seed=0):
    """Learn how to combine base outputs (n x A) into one score."""
    C = np.asarray(outputs, dtype=float)
    y = np.asarray(labels).astype(float).ravel()
    if C.ndim != 2 or len(C) != len(y):
        raise DimensionMismatch(f"outputs of shape {C.shape} for {len(y)} labels")
    if kind not in COMBINER_KINDS:
        raise ValueError(f"unknown combiner kind {kind!r}")
    A = C.shape[1]
    if kind == "uniform":
        return uniform_combiner(A)
    if len(y) < 10:
        raise DegenerateClass(f"meta set of {len(y)} rows; at least 10 required")
    if y.min() == y.max():
        raise DegenerateClass("meta set contains one class only")
    if kind == "linear_least_squares":
        w, *_ = np.linalg.lstsq(C, y, rcond=None)
        return MetaCombiner(kind, {"w": w}, A)
    forest = trees.grow_forest(C, y, META_TREES, max_depth=META_DEPTH, min_leaf=1,
                               max_features=math.ceil(math.sqrt(A)), bootstrap=True, seed=seed)
    return MetaCombiner(kind, {"trees": forest}, A)


def combine(m, outputs, raw=False):
    """Combined score. Linear kinds return the weighted sum, clipped to [0, 1] unless raw."""
    C = np.asarray(outputs, dtype=float)
    if C.ndim != 2 or C.shape[1] != m.input_arity:
        raise ArityMismatch(f"combiner expects {m.input_arity} inputs, got shape {C.shape}")
    if m.kind == "random_forest":
        return trees.forest_score(m.state["trees"], C)
    s = C @ m.state["w"]
    return s if raw else np.clip(s, 0.0, 1.0)


def combiner_to_record(m):
    return {"kind": m.kind, "input_arity": m.input_arity, "state": serialize.encode(m.state)}


def combiner_from_record(rec):
    return MetaCombiner(rec["kind"], serialize.decode(rec["state"]), rec["input_arity"])


# ----------------------------------------------------------------------------
# audit of rows seen by fitting

def row_hashes(X):
    X = np.ascontiguousarray(X, dtype=float)
    return {hashlib.sha1(r.tobytes()).hexdigest() for r in X}


@dataclass
class AuditLog:
    """Row indices (and row hashes) handed to every fit call."""

    entries: list = field(default_factory=list)
    hashes: set = field(default_factory=set)

    def record(self, stage, idx, X=None):
        idx = np.unique(np.asarray(idx, dtype=np.int64))
        self.entries.append((stage, idx))
        if X is not None:
            self.hashes |= row_hashes(X[idx])

    def seen(self):
        if not self.entries:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate([idx for _, idx in self.entries]))

    def violations(self, test_idx, X_test=None):
        """Test indices (or test rows, when given) that some fit call saw."""
        bad = np.intersect1d(self.seen(), np.asarray(test_idx, dtype=np.int64))
        n_rows = len(row_hashes(X_test) & self.hashes) if X_test is not None else 0
        return bad, n_rows


# ----------------------------------------------------------------------------
# stacking models

@dataclass(frozen=True, eq=False)
class FirstStepModel:
    classifiers: list
    combiner: MetaCombiner
    split_index: int
    uses_labels: bool = False

    def base_outputs(self, X):
        S = np.column_stack([learners.predict_score(c, X) for c in self.classifiers])
        return (S >= 0.5).astype(float) if self.uses_labels else S

    def score(self, X, raw=False):
        return combine(self.combiner, self.base_outputs(X), raw=raw)

    def predict(self, X):
        return (self.score(X) >= 0.5).astype(np.int64)


@dataclass(frozen=True, eq=False)
class TwoStepModel:
    first_steps: list
    second_combiner: MetaCombiner
    roster: list
    partition_fingerprint: str
    seed: int
    second_uses_labels: bool = False

    @property
    def K(self):
        return len(self.first_steps)

    @property
    def feature_count(self):
        return self.first_steps[0].classifiers[0].feature_count

    def first_step_scores(self, X):
        return np.column_stack([fs.score(X) for fs in self.first_steps])


def _check_roster(roster):
    if not roster:
        raise ValueError("roster is empty")
    return [(spec, dict(params)) for spec, params in roster]


def fit_roster(X, y, rows, roster, seed, split_index=0, audit=None):
    """Fit every roster learner on X[rows]; seeds depend on (seed, split, learner)."""
    roster = _check_roster(roster)
    rows = np.asarray(rows, dtype=np.int64)
    if audit is not None:
        audit.record(f"learners[{split_index}]", rows, X)
    fitted = []
    for l, (spec, params) in enumerate(roster):
        try:
            fitted.append(learners.fit(spec, params, X[rows], y[rows], seed=derive_seed(seed, split_index, l)))
        except Exception as exc:
            exc.args = (f"first step k={split_index}, learner l={l} ({spec.kind}): {exc}",)
            raise
    return fitted


def fit_first_step(X, y, train_idx, val_idx, roster, seed, kind="random_forest",
                   uses_labels=False, split_index=0, fitted=None, audit=None):
    """Fit L classifiers on the training rows and a combiner on their validation outputs.

    Pass ``fitted`` to reuse classifiers already trained on ``train_idx``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(np.int64)
    val_idx = np.asarray(val_idx, dtype=np.int64)
    if fitted is None:
        fitted = fit_roster(X, y, train_idx, roster, seed, split_index, audit)
    proto = FirstStepModel(list(fitted), uniform_combiner(len(fitted)), split_index, uses_labels)
    if audit is not None:
        audit.record(f"combiner[{split_index}]", val_idx, X)
    outputs = proto.base_outputs(X[val_idx])
    combiner = fit_meta(outputs, y[val_idx], kind, seed=derive_seed(seed, split_index, 10_000))
    return FirstStepModel(list(fitted), combiner, split_index, uses_labels)


def _assert_no_leak(partition, K):
    test = set(np.asarray(partition.test).tolist())
    used = set(np.asarray(partition.validation0).tolist())
    for tr, va in partition.first_step_splits[:K]:
        used |= set(np.asarray(tr).tolist()) | set(np.asarray(va).tolist())
    if test & used:
        raise PartitionLeak(f"{len(test & used)} test subjects appear in fitting subsets")


def fit_two_step(X, y, partition, roster, seed, K=None, first_kind="random_forest",
                 second_kind="random_forest", first_uses_labels=False, second_uses_labels=False,
                 fitted=None, audit=None):
    """K first-step stacks on the partition's splits, stacked again on validation0.

    The test rows of the partition are never touched. ``fitted`` may hold K
    lists of classifiers already trained on the corresponding train_k.
    """
    K = partition.K if K is None else K
    if not 1 <= K <= partition.K:
        raise ValueError(f"K={K} but the partition has {partition.K} splits")
    _assert_no_leak(partition, K)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(np.int64)
    roster = _check_roster(roster)
    firsts = []
    for k, (train_k, val_k) in enumerate(partition.first_step_splits[:K]):
        firsts.append(fit_first_step(X, y, train_k, val_k, roster, seed, first_kind, first_uses_labels,
                                     split_index=k, fitted=None if fitted is None else fitted[k],
                                     audit=audit))
    val0 = np.asarray(partition.validation0, dtype=np.int64)
    if audit is not None:
        audit.record("second_combiner", val0, X)
    step_scores = np.column_stack([fs.score(X[val0]) for fs in firsts])
    if second_uses_labels:
        step_scores = (step_scores >= 0.5).astype(float)
    second = fit_meta(step_scores, y[val0], second_kind, seed=derive_seed(seed, 20_000))
    return TwoStepModel(firsts, second, roster, partition.fingerprint(), int(seed), second_uses_labels)


def predict_two_step(m, X, raw=False):
    """(labels, scores) for row(s) X; label = score >= 0.5."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.shape[1] != m.feature_count:
        raise DimensionMismatch(f"model expects {m.feature_count} features, got {X2.shape[1]}")
    S = m.first_step_scores(X2)
    if m.second_uses_labels:
        S = (S >= 0.5).astype(float)
    scores = combine(m.second_combiner, S, raw=raw)
    labels = (scores >= 0.5).astype(np.int64)
    if single:
        return int(labels[0]), float(scores[0])
    return labels, scores


def fit_traditional_stack(X, y, train_idx, val_idx, roster, seed, kind="random_forest",
                          uses_labels=False, fitted=None, audit=None):
    """Single-layer stacking: learners on train_idx, combiner on val_idx.

    Seeds follow first step k=0, so this equals the first step of a K=1
    two-step model built on the same subsets.
    """
    return fit_first_step(X, y, train_idx, val_idx, roster, seed, kind, uses_labels,
                          split_index=0, fitted=fitted, audit=audit)


def fit_weighted_vote_baseline(X, y, train_idx, val_idx, roster, seed, uses_labels=False,
                               fitted=None, audit=None):
    """Weighted vote with least-squares weights (no intercept) fitted on val_idx."""
    return fit_first_step(X, y, train_idx, val_idx, roster, seed, "linear_least_squares", uses_labels,
                          split_index=0, fitted=fitted, audit=audit)


def first_step_validation_accuracy(fitted_per_split, X, y, splits):
    """Mean accuracy of each learner on the first-step validation sets, shape (L,)."""
    acc = []
    for fitted, (_, val_k) in zip(fitted_per_split, splits):
        acc.append([np.mean(learners.predict_label(c, X[val_k]) == y[val_k]) for c in fitted])
    return np.mean(acc, axis=0)


def top_learners(accuracies, n=3):
    """Indices of the n most accurate learners, ties broken by roster order."""
    order = sorted(range(len(accuracies)), key=lambda i: (-accuracies[i], i))
    return sorted(order[:n])


# ----------------------------------------------------------------------------
# persistence

MODEL_FORMAT = "twostep.model"


def two_step_to_record(m):
    return {
        "format": MODEL_FORMAT,
        "version": serialize.FORMAT_VERSION,
        "K": m.K,
        "seed": m.seed,
        "partition_fingerprint": m.partition_fingerprint,
        "second_uses_labels": m.second_uses_labels,
        "roster": [{"kind": s.kind, "hyper_grid": {k: list(v) for k, v in s.hyper_grid.items()},
                    "seed": s.seed, "hyperparams": p} for s, p in m.roster],
        "first_steps": [{
            "split_index": fs.split_index,
            "uses_labels": fs.uses_labels,
            "classifiers": [learners.to_record(c) for c in fs.classifiers],
            "combiner": combiner_to_record(fs.combiner),
        } for fs in m.first_steps],
        "second_combiner": combiner_to_record(m.second_combiner),
    }


def two_step_from_record(rec):
    if rec.get("format") != MODEL_FORMAT or rec.get("version") != serialize.FORMAT_VERSION:
        raise VersionMismatch(f"unsupported model record {rec.get('format')!r} v{rec.get('version')}")
    roster = [(learners.LearnerSpec(r["kind"], {k: tuple(v) for k, v in r["hyper_grid"].items()}, r["seed"]),
               r["hyperparams"]) for r in rec["roster"]]
    firsts = [FirstStepModel([learners.from_record(c) for c in fs["classifiers"]],
                             combiner_from_record(fs["combiner"]), fs["split_index"], fs["uses_labels"])
              for fs in rec["first_steps"]]
    return TwoStepModel(firsts, combiner_from_record(rec["second_combiner"]), roster,
                        rec["partition_fingerprint"], rec["seed"], rec["second_uses_labels"])
