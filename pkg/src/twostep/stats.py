"""Two-sample t-tests, correlation analysis and block-wise PCA of the segment strains."""

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .dataset import SEGMENT_BLOCKS, Dataset
from .errors import RankDeficient, SampleTooSmall, SchemaMismatch, ZeroVariance

# ----------------------------------------------------------------------------
# Student t distribution via the regularized incomplete beta function


def _betacf(a, b, x, eps=1e-16, max_iter=500):
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc(a, b, x):
    """Regularized incomplete beta function I_x(a, b) for a, b > 0."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t, df):
    """P(|T| >= |t|) for Student's t with `df` degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if t == 0:
        return 1.0
    x = df / (df + t * t)
    return min(1.0, max(0.0, betainc(0.5 * df, 0.5, x)))


def t_cdf(t, df):
    half = 0.5 * t_sf_two_sided(t, df)
    return 1.0 - half if t > 0 else half


# ----------------------------------------------------------------------------
# t-tests and screening

@dataclass(frozen=True)
class TestResult:
    statistic: float
    degrees_of_freedom: float
    p_value: float
    mean_case: float
    mean_control: float

    __test__ = False  # not a pytest class


def welch_t_test(case, control, equal_var=False):
    """Two-sided two-sample t-test (Welch by default, pooled with equal_var=True)."""
    a = np.asarray(case, dtype=float)
    b = np.asarray(control, dtype=float)
    n1, n2 = len(a), len(b)
    if n1 < 2 or n2 < 2:
        raise SampleTooSmall(f"sample sizes {n1} and {n2}; each must be at least 2")
    m1, m2 = float(a.mean()), float(b.mean())
    v1, v2 = float(a.var(ddof=1)), float(b.var(ddof=1))
    if v1 <= 0 or v2 <= 0:
        raise ZeroVariance("a sample has zero variance")
    if equal_var:
        df = float(n1 + n2 - 2)
        pooled = ((n1 - 1) * v1 + (n2 - 1) * v2) / df
        se2 = pooled * (1.0 / n1 + 1.0 / n2)
    else:
        q1, q2 = v1 / n1, v2 / n2
        se2 = q1 + q2
        df = se2 * se2 / (q1 * q1 / (n1 - 1) + q2 * q2 / (n2 - 1))
    t = (m1 - m2) / math.sqrt(se2)
    return TestResult(t, df, t_sf_two_sided(t, df), m1, m2)


@dataclass(frozen=True)
class Screening:
    feature: str
    result: TestResult
    significant: bool


def screen_features(d: Dataset, alpha=0.05, equal_var=False):
    """Test every numeric feature between cases (label 1) and controls.

    A feature is significant when its p-value is <= alpha.
    """
    case = d.y == 1
    if case.all() or not case.any():
        raise SchemaMismatch("screening needs both classes present")
    out = []
    for name in d.schema.numeric_features:
        x = d.column(name)
        try:
            res = welch_t_test(x[case], x[~case], equal_var=equal_var)
        except ZeroVariance as exc:
            raise ZeroVariance(f"{name}: {exc}", feature=name) from None
        except SampleTooSmall as exc:
            raise SampleTooSmall(f"{name}: {exc}") from None
        out.append(Screening(name, res, res.p_value <= alpha))
    return out


def screening_to_csv(results):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "statistic", "df", "p_value", "significant"])
    for s in results:
        r = s.result
        w.writerow([s.feature, f"{r.statistic:.6f}", f"{r.degrees_of_freedom:.3f}",
                    f"{r.p_value:.6g}", int(s.significant)])
    return buf.getvalue()


def correlation_matrix(d, features=None):
    """Pearson correlations among the named columns (all numeric features by default)."""
    names = list(d.schema.numeric_features if features is None else features)
    X = d.columns(names) if isinstance(d, Dataset) else np.asarray(d, dtype=float)
    if len(X) < 2:
        raise SampleTooSmall("correlation needs at least 2 rows")
    Z = X - X.mean(axis=0)
    sd = np.sqrt((Z * Z).sum(axis=0))
    for name, s in zip(names, sd):
        if s == 0:
            raise ZeroVariance(f"{name} has zero variance", feature=name)
    Z /= sd
    R = Z.T @ Z
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    return np.clip(R, -1.0, 1.0)


def correlation_to_csv(R, names):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + list(names))
    for name, row in zip(names, R):
        w.writerow([name] + [f"{v:.6f}" for v in row])
    return buf.getvalue()


# ----------------------------------------------------------------------------
# PCA on the 17-segment blocks

PAPER_RETAINED = {"pss": 3, "ssr": 3, "tp": 2}


@dataclass(frozen=True, eq=False)
class PcaModel:
    block_name: str
    center: np.ndarray
    scale: np.ndarray
    loadings: np.ndarray  # columns are components, descending eigenvalue
    eigenvalues: np.ndarray
    retained: int

    @property
    def dim(self):
        return len(self.center)

    def with_retained(self, r):
        if not 1 <= r <= self.dim:
            raise ValueError(f"retained must be in 1..{self.dim}")
        return replace(self, retained=int(r))


def pca_from_matrix(X, block_name="block", retained=None):
    """Correlation-matrix PCA of the columns of X."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n <= p:
        raise SampleTooSmall(f"PCA of {p} columns needs more than {p} rows, got {n}")
    center = X.mean(axis=0)
    scale = X.std(axis=0, ddof=1)
    if np.any(scale == 0):
        raise RankDeficient(f"{block_name}: column(s) {np.flatnonzero(scale == 0).tolist()} have zero variance")
    Z = (X - center) / scale
    R = Z.T @ Z / (n - 1)
    R = 0.5 * (R + R.T)
    vals, vecs = np.linalg.eigh(R)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    # sign convention: the largest-magnitude loading of each component is positive
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(p)])
    vecs = vecs * np.where(signs == 0, 1.0, signs)
    for arr in (center, scale, vecs, vals):
        arr.flags.writeable = False
    model = PcaModel(block_name, center, scale, vecs, vals, 1)
    if retained is None:
        retained = select_pcs(model, "paper_fixed" if block_name in PAPER_RETAINED else "elbow")
    return model.with_retained(retained)


def fit_pca(d, block, policy="paper_fixed", rows=None):
    """Fit PCA on one segment block (pss, ssr or tp), optionally on a subset of rows."""
    if block not in SEGMENT_BLOCKS:
        raise SchemaMismatch(f"PCA is defined for {SEGMENT_BLOCKS}, not {block!r}")
    X = d.block(block)
    if rows is not None:
        X = X[np.asarray(rows, dtype=int)]
    model = pca_from_matrix(X, block, retained=1)
    return model.with_retained(select_pcs(model, policy))


def select_pcs(model, policy="paper_fixed"):
    """Number of leading components to keep.

    ``paper_fixed`` keeps 3/3/2 for PSS/SSR/TP. ``elbow`` keeps the components
    before the point of largest second difference of the eigenvalues.
    """
    if policy == "paper_fixed":
        try:
            return PAPER_RETAINED[model.block_name]
        except KeyError:
            raise ValueError(f"no fixed retention for block {model.block_name!r}") from None
    if policy == "elbow":
        ev = np.asarray(model.eigenvalues, dtype=float)
        if len(ev) < 3:
            return 1
        d2 = ev[:-2] - 2.0 * ev[1:-1] + ev[2:]
        return max(1, int(np.argmax(d2)) + 1)
    raise ValueError(f"unknown policy {policy!r}")


def project(model, rows, all_components=False):
    """Scores of row(s) on the retained components."""
    rows = np.asarray(rows, dtype=float)
    if rows.shape[-1] != model.dim:
        raise SchemaMismatch(f"expected {model.dim} values per row, got {rows.shape[-1]}")
    k = model.dim if all_components else model.retained
    return ((rows - model.center) / model.scale) @ model.loadings[:, :k]


def fit_block_models(d, rows=None, policy="paper_fixed"):
    return {b: fit_pca(d, b, policy=policy, rows=rows) for b in SEGMENT_BLOCKS}


PASSTHROUGH_BLOCKS = ("gs", "glps", "psd")


def model_input_names(d, models):
    names = []
    for b in SEGMENT_BLOCKS:
        names += [f"{b}_pc{i + 1}" for i in range(models[b].retained)]
    for b in PASSTHROUGH_BLOCKS:
        names += list(d.schema.blocks[b])
    return names + list(d.schema.categorical_features)


def build_model_input(d, models):
    """Reduced feature table: PC scores replace the raw 17-segment blocks.

    Column order is PSS, SSR, TP scores, then radial strain (9), GLPS (3),
    PSD (1) and the 7 clinical features; 28 columns under the fixed policy.
    """
    if set(models) != set(SEGMENT_BLOCKS):
        raise SchemaMismatch(f"need PCA models for {SEGMENT_BLOCKS}")
    parts = []
    for b in SEGMENT_BLOCKS:
        m = models[b]
        if m.block_name != b or m.dim != len(d.schema.blocks[b]):
            raise SchemaMismatch(f"PCA model for {m.block_name!r} does not fit block {b!r}")
        parts.append(project(m, d.block(b)))
    for b in PASSTHROUGH_BLOCKS:
        parts.append(d.block(b))
    parts.append(d.columns(d.schema.categorical_features))
    return np.hstack(parts)


def glps_only_input(d):
    """The three GLPS layers plus the clinical features."""
    return np.hstack([d.block("glps"), d.columns(d.schema.categorical_features)])


def glps_only_names(d):
    return list(d.schema.blocks["glps"]) + list(d.schema.categorical_features)


def loadings_to_csv(models):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["block", "segment", "component", "loading", "eigenvalue", "retained"])
    for b in SEGMENT_BLOCKS:
        m = models[b]
        for j in range(m.dim):
            for s in range(m.dim):
                w.writerow([b, s + 1, j + 1, f"{m.loadings[s, j]:.6f}",
                            f"{m.eigenvalues[j]:.6f}", int(j < m.retained)])
    return buf.getvalue()
