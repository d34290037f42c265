"""Cohort schema, CSV input/output and the stratified partitions used for stacking."""

import csv
import hashlib
import io
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CohortTooSmall,
    DegenerateClass,
    DuplicateSubjectId,
    MissingColumn,
    NonNumericCell,
    SchemaMismatch,
    UnknownCategoryValue,
)

# AHA 17-segment model, in segment-number order.
SEGMENTS = (
    "basal anterior", "basal anteroseptal", "basal inferoseptal",
    "basal inferior", "basal inferolateral", "basal anterolateral",
    "mid anterior", "mid anteroseptal", "mid inferoseptal",
    "mid inferior", "mid inferolateral", "mid anterolateral",
    "apical anterior", "apical septal", "apical inferior", "apical lateral",
    "apex",
)
LEVELS = {
    "basal": tuple(range(0, 6)),
    "mid": tuple(range(6, 12)),
    "apical": tuple(range(12, 16)),
    "apex": (16,),
}
LAYERS = ("endo", "mid", "epi")
RADIAL_LEVELS = ("mv", "pm", "ap")

SEGMENT_BLOCKS = ("pss", "ssr", "tp")
CLINICAL = ("age", "gender", "hypertension", "diabetes", "hyperlipemia", "smoke", "family_history")
BINARY_CLINICAL = CLINICAL[1:]
ID_COLUMN = "subject_id"
LABEL_COLUMN = "chd_label"


def _segment_names(block):
    return tuple(f"{block}_{i:02d}" for i in range(1, 18))


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered names of the 64 strain features and 7 clinical features."""

    blocks: dict = field(default_factory=lambda: {
        "pss": _segment_names("pss"),
        "ssr": _segment_names("ssr"),
        "tp": _segment_names("tp"),
        "gs": tuple(f"gs_{lv}_{ly}" for lv in RADIAL_LEVELS for ly in LAYERS),
        "glps": tuple(f"glps_{ly}" for ly in LAYERS),
        "psd": ("psd",),
    })
    categorical_features: tuple = CLINICAL

    def __post_init__(self):
        sizes = {k: len(v) for k, v in self.blocks.items()}
        if sizes != {"pss": 17, "ssr": 17, "tp": 17, "gs": 9, "glps": 3, "psd": 1}:
            raise SchemaMismatch(f"block sizes {sizes} do not match the 17/17/17/9/3/1 layout")
        if len(self.categorical_features) != 7:
            raise SchemaMismatch("expected 7 clinical features")

    @property
    def numeric_features(self):
        return tuple(name for names in self.blocks.values() for name in names)

    @property
    def columns(self):
        return self.numeric_features + tuple(self.categorical_features)

    def index(self, name):
        return self.columns.index(name)

    def indices(self, names):
        cols = {c: i for i, c in enumerate(self.columns)}
        try:
            return np.array([cols[n] for n in names], dtype=int)
        except KeyError as exc:
            raise SchemaMismatch(f"unknown feature {exc.args[0]!r}") from None

    def block_indices(self, block):
        return self.indices(self.blocks[block])


DEFAULT_SCHEMA = FeatureSchema()


@dataclass(frozen=True, eq=False)
class Dataset:
    """Validated cohort: one row of 71 predictors, one label and one id per subject."""

    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    subject_ids: tuple

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] != len(self.schema.columns):
            raise SchemaMismatch(f"expected {len(self.schema.columns)} columns, got shape {X.shape}")
        if not (len(X) == len(y) == len(self.subject_ids)):
            raise SchemaMismatch("rows, labels and subject ids differ in length")
        if not np.all(np.isfinite(X)):
            raise SchemaMismatch("dataset contains missing or non-finite values")
        if not np.all((y == 0) | (y == 1)):
            raise SchemaMismatch("labels must be 0 or 1")
        if len(set(self.subject_ids)) != len(self.subject_ids):
            raise SchemaMismatch("subject ids are not unique")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))

    def __len__(self):
        return len(self.y)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.schema.columns == other.schema.columns
                and self.subject_ids == other.subject_ids
                and np.array_equal(self.y, other.y)
                and self.X.tobytes() == other.X.tobytes())

    @property
    def n_positive(self):
        return int(self.y.sum())

    def column(self, name):
        return self.X[:, self.schema.index(name)]

    def columns(self, names):
        return self.X[:, self.schema.indices(names)]

    def block(self, name):
        return self.X[:, self.schema.block_indices(name)]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.schema, self.X[idx], self.y[idx], tuple(self.subject_ids[i] for i in idx))


# ----------------------------------------------------------------------------
# CSV input / output

_BINARY_LITERALS = {"0": 0, "1": 1, "n": 0, "y": 1}
_GENDER_LITERALS = {"0": 0, "1": 1, "f": 0, "m": 1}


def _parse_number(text, row, column):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise NonNumericCell(row, column, text) from None
    if not math.isfinite(value):
        raise NonNumericCell(row, column, text)
    return value


def _parse_category(text, row, column):
    table = _GENDER_LITERALS if column == "gender" else _BINARY_LITERALS
    key = text.strip().lower()
    if key in ("0.0", "1.0"):
        key = key[0]
    if key not in table:
        raise UnknownCategoryValue(row, column, text)
    return table[key]


def load_cohort(path, schema=DEFAULT_SCHEMA):
    """Read and validate a cohort CSV.

    Columns are matched by name. Rows are numbered from 1 (first data row)
    in error messages.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumn(ID_COLUMN) from None
        expected = (ID_COLUMN,) + schema.columns + (LABEL_COLUMN,)
        for name in expected:
            if name not in header:
                raise MissingColumn(name)
        extra = [h for h in header if h not in expected]
        if extra:
            raise SchemaMismatch(f"unexpected columns {extra}")
        pos = {h: i for i, h in enumerate(header)}
        numeric = set(schema.numeric_features)

        ids, rows, labels, seen = [], [], [], {}
        for r, record in enumerate(reader, start=1):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(header):
                raise SchemaMismatch(f"row {r}: expected {len(header)} cells, got {len(record)}")
            sid = record[pos[ID_COLUMN]].strip()
            if sid in seen:
                raise DuplicateSubjectId(r, sid)
            seen[sid] = r
            values = []
            for name in schema.columns:
                cell = record[pos[name]].strip()
                if name in numeric:
                    values.append(_parse_number(cell, r, name))
                elif name == "age":
                    age = _parse_number(cell, r, name)
                    if age < 0 or age != int(age):
                        raise NonNumericCell(r, name, cell)
                    values.append(float(int(age)))
                else:
                    values.append(float(_parse_category(cell, r, name)))
            label_text = record[pos[LABEL_COLUMN]].strip()
            if label_text not in ("0", "1"):
                raise UnknownCategoryValue(r, LABEL_COLUMN, label_text)
            ids.append(sid)
            rows.append(values)
            labels.append(int(label_text))

    X = np.array(rows, dtype=float).reshape(len(rows), len(schema.columns))
    return Dataset(schema, X, np.array(labels, dtype=np.int64), tuple(ids))


def cohort_to_csv(d):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow((ID_COLUMN,) + d.schema.columns + (LABEL_COLUMN,))
    n_numeric = len(d.schema.numeric_features)
    for sid, row, label in zip(d.subject_ids, d.X, d.y):
        cells = [repr(float(v)) for v in row[:n_numeric]]
        cells += [str(int(v)) for v in row[n_numeric:]]
        writer.writerow([sid] + cells + [str(int(label))])
    return buf.getvalue()


def atomic_write(path, text, mode="w"):
    """Write to a temporary file in the target directory, then rename over `path`."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode, **({} if "b" in mode else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_cohort(d, path):
    atomic_write(path, cohort_to_csv(d))


# ----------------------------------------------------------------------------
# Stratified splitting

def round_half_up(x):
    # rounding x to 9 places first absorbs binary noise such as 0.2 * 360 = 72.00000000000001
    return int(math.floor(round(x, 9) + 0.5))


def _labels(d):
    return np.asarray(d.y if isinstance(d, Dataset) else d, dtype=np.int64)


def _draw_stratified(labels, candidates, size, rng):
    """Pick `size` of `candidates` so that the positive count is proportional.

    The positive count is rounded half-up first; negatives take the remainder.
    Returns (held, rest) as sorted index arrays.
    """
    cand_labels = labels[candidates]
    pos = candidates[cand_labels == 1]
    neg = candidates[cand_labels == 0]
    n = len(candidates)
    n_pos = round_half_up(size * len(pos) / n)
    n_neg = size - n_pos
    if not (1 <= n_pos <= len(pos) - 1 and 1 <= n_neg <= len(neg) - 1):
        raise DegenerateClass(
            f"a split of {size} from {len(pos)} positives / {len(neg)} negatives would empty a class")
    held = np.concatenate([rng.permutation(pos)[:n_pos], rng.permutation(neg)[:n_neg]])
    held.sort()
    rest = np.setdiff1d(candidates, held)
    return held, rest


def stratified_split(d, holdout_fraction, seed):
    """Split subjects into a stratified hold-out part and the rest."""
    if not 0 < holdout_fraction < 1:
        raise ValueError("holdout_fraction must be in (0, 1)")
    labels = _labels(d)
    counts = np.bincount(labels, minlength=2)
    if counts.min() < 2:
        raise DegenerateClass("each class needs at least 2 members")
    size = round_half_up(holdout_fraction * len(labels))
    rng = np.random.default_rng(seed)
    return _draw_stratified(labels, np.arange(len(labels)), size, rng)


TEST_FRACTION = 0.15
VALIDATION_FRACTION = 0.20


def partition_sizes(n):
    """(test, validation0, training_pool, first-step train, first-step val) for a cohort of n."""
    test = round_half_up(TEST_FRACTION * n)
    val0 = round_half_up(VALIDATION_FRACTION * (n - test))
    pool = n - test - val0
    val_k = round_half_up(VALIDATION_FRACTION * pool)
    return test, val0, pool, pool - val_k, val_k


@dataclass(frozen=True, eq=False)
class Partition:
    test: np.ndarray
    validation0: np.ndarray
    training_pool: np.ndarray
    first_step_splits: tuple  # ((train_k, val_k), ...)

    @property
    def K(self):
        return len(self.first_step_splits)

    def fingerprint(self):
        h = hashlib.sha256()
        for arr in (self.test, self.validation0, self.training_pool):
            h.update(np.asarray(arr, dtype=np.int64).tobytes())
            h.update(b"|")
        for tr, va in self.first_step_splits:
            h.update(np.asarray(tr, dtype=np.int64).tobytes())
            h.update(b"/")
            h.update(np.asarray(va, dtype=np.int64).tobytes())
            h.update(b"|")
        return h.hexdigest()

    def __eq__(self, other):
        return isinstance(other, Partition) and self.fingerprint() == other.fingerprint()

    def validate(self, n):
        """Raise AssertionError unless disjointness and coverage hold."""
        parts = [self.test, self.validation0, self.training_pool]
        allidx = np.concatenate(parts)
        assert len(allidx) == n and len(np.unique(allidx)) == n, "partition does not cover the cohort"
        pool = set(self.training_pool.tolist())
        for tr, va in self.first_step_splits:
            assert not set(tr.tolist()) & set(va.tolist()), "first-step train/val overlap"
            assert set(tr.tolist()) | set(va.tolist()) == pool, "first-step split does not cover the pool"


def make_paper_partition(d, K, seed):
    """Test / validation0 / training-pool split plus K first-step (train, val) splits.

    For n=424 this gives 64/72/288 and (230, 58) splits. Each first-step split is
    drawn independently, so different k can share subjects.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    labels = _labels(d)
    n = len(labels)
    sizes = partition_sizes(n)
    if min(sizes) < 2:
        raise CohortTooSmall(f"cohort of {n} is too small for the partition (sizes {sizes})")
    n_test, n_val0, _, _, n_valk = sizes
    rng = np.random.default_rng(seed)
    try:
        test, rest = _draw_stratified(labels, np.arange(n), n_test, rng)
        val0, pool = _draw_stratified(labels, rest, n_val0, rng)
        splits = []
        for _ in range(K):
            val_k, train_k = _draw_stratified(labels, pool, n_valk, rng)
            splits.append((train_k, val_k))
    except DegenerateClass as exc:
        raise CohortTooSmall(str(exc)) from None
    for arr in [test, val0, pool] + [a for s in splits for a in s]:
        arr.flags.writeable = False
    return Partition(test, val0, pool, tuple(splits))
