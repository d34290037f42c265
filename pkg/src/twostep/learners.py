"""Base classifiers behind one interface, with cross-validated grid tuning.

Every learner kind provides a ``fit`` function returning a dict of numpy
parameters and a ``score`` function mapping rows to a positive-class score
in [0, 1]. The label is always ``score >= 0.5``.
"""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import serialize, trees
from .errors import DegenerateClass, DegenerateFold, DimensionMismatch, VersionMismatch

log = logging.getLogger(__name__)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    hyper_grid: dict
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if not self.hyper_grid or any(len(v) == 0 for v in self.hyper_grid.values()):
            raise ValueError(f"{self.kind}: hyperparameter grid must be non-empty")

    def grid_points(self):
        names = list(self.hyper_grid)
        for values in itertools.product(*(self.hyper_grid[n] for n in names)):
            yield dict(zip(names, values))

    def __hash__(self):
        return hash((self.kind, tuple((k, tuple(v)) for k, v in self.hyper_grid.items()), self.seed))


@dataclass(frozen=True, eq=False)
class TrainedClassifier:
    spec: LearnerSpec
    hyperparams: dict
    state: dict
    feature_count: int
    flags: dict = field(default_factory=dict)

    @property
    def kind(self):
        return self.spec.kind


# ----------------------------------------------------------------------------
# shared pieces

def _standardizer(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 1e-12, sd, 1.0)
    return mu, sd


def _std(state, X):
    return (X - state["mu"]) / state["sd"]


def _logistic_newton(Z, y, l2, max_iter=100, tol=1e-8):
    """Minimize mean log-loss + l2/2 * |w|^2 (intercept unpenalized) by damped Newton.

    Returns (w, b, grad_norm, converged).
    """
    n, p = Z.shape
    A = np.hstack([Z, np.ones((n, 1))])
    theta = np.zeros(p + 1)
    pen = np.full(p + 1, l2)
    pen[-1] = 0.0

    def objective(th):
        z = A @ th
        return np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * np.sum(pen * th * th)

    f = objective(theta)
    grad_norm = np.inf
    for _ in range(max_iter):
        mu = sigmoid(A @ theta)
        grad = A.T @ (mu - y) / n + pen * theta
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < tol:
            return theta[:-1], theta[-1], grad_norm, True
        W = mu * (1 - mu)
        H = (A * W[:, None]).T @ A / n + np.diag(pen + 1e-10)
        step = np.linalg.solve(H, grad)
        t = 1.0
        while t > 1e-8:
            cand = theta - t * step
            fc = objective(cand)
            if fc <= f:
                break
            t *= 0.5
        theta, f = cand, fc
    mu = sigmoid(A @ theta)
    grad_norm = float(np.linalg.norm(A.T @ (mu - y) / n + pen * theta))
    return theta[:-1], theta[-1], grad_norm, grad_norm < 1e-5


def _fit_slope(margins, y, cap=50.0):
    """1-D maximum likelihood for a in P(y=1) = sigmoid(a * margin)."""
    s = 2.0 * y - 1.0
    a = 1.0
    for _ in range(50):
        z = a * margins * s
        p = sigmoid(-z)  # derivative weight
        grad = -np.sum(margins * s * p) + 1e-4 * a
        hess = np.sum(margins * margins * p * (1 - p)) + 1e-4
        a_new = min(cap, max(1e-3, a - grad / hess))
        if abs(a_new - a) < 1e-10:
            a = a_new
            break
        a = a_new
    return float(a)


# ----------------------------------------------------------------------------
# logistic models

def _fit_logistic(X, y, params, seed, flags):
    mu, sd = _standardizer(X)
    Z = (X - mu) / sd
    w, b, gnorm, ok = _logistic_newton(Z, y, params.get("l2", 1e-4))
    if not ok:
        flags["nonconvergence"] = gnorm
        log.warning("logistic fit did not converge (gradient norm %.3g)", gnorm)
    return {"mu": mu, "sd": sd, "w": w, "b": np.float64(b)}


def _score_logistic(state, X):
    return sigmoid(_std(state, X) @ state["w"] + state["b"])


def _fit_bayes_linear(X, y, params, seed, flags):
    """Logistic regression with a N(0, prior_var) prior; Laplace posterior."""
    n = len(y)
    mu, sd = _standardizer(X)
    Z = (X - mu) / sd
    l2 = 1.0 / (n * params["prior_var"])
    w, b, gnorm, ok = _logistic_newton(Z, y, l2)
    if not ok:
        flags["nonconvergence"] = gnorm
    A = np.hstack([Z, np.ones((n, 1))])
    prob = sigmoid(A @ np.r_[w, b])
    prec = (A * (prob * (1 - prob))[:, None]).T @ A
    prec[np.arange(len(w)), np.arange(len(w))] += 1.0 / params["prior_var"]
    prec[-1, -1] += 1e-6
    cov = np.linalg.inv(prec)
    return {"mu": mu, "sd": sd, "w": w, "b": np.float64(b), "cov": 0.5 * (cov + cov.T)}


def _score_bayes_linear(state, X):
    Z = _std(state, X)
    A = np.hstack([Z, np.ones((len(Z), 1))])
    mean = A @ np.r_[state["w"], state["b"]]
    var = np.einsum("ij,jk,ik->i", A, state["cov"], A)
    return sigmoid(mean / np.sqrt(1.0 + np.pi * np.maximum(var, 0.0) / 8.0))


# ----------------------------------------------------------------------------
# generative models

def _fit_lda(X, y, params, seed, flags):
    X1, X0 = X[y == 1], X[y == 0]
    m1, m0 = X1.mean(axis=0), X0.mean(axis=0)
    R = np.vstack([X1 - m1, X0 - m0])
    S = R.T @ R / (len(X) - 2)
    p = X.shape[1]
    alpha = params.get("shrinkage", 0.0)
    target = np.trace(S) / p
    S = (1 - alpha) * S + alpha * target * np.eye(p)
    if np.linalg.cond(S) > 1e12:
        S = S + 1e-6 * max(target, 1e-12) * np.eye(p)
        flags["singular_covariance"] = True
        log.warning("LDA covariance singular; ridge-regularized")
    w = np.linalg.solve(S, m1 - m0)
    prior = np.log(len(X1) / len(X0))
    b = -0.5 * (m1 + m0) @ w + prior
    return {"w": w, "b": np.float64(b)}


def _score_lda(state, X):
    return sigmoid(X @ state["w"] + state["b"])


def _fit_gnb(X, y, params, seed, flags):
    eps = params.get("var_smoothing", 1e-9) * X.var(axis=0).max()
    means, variances, priors = [], [], []
    for c in (0, 1):
        Xc = X[y == c]
        means.append(Xc.mean(axis=0))
        variances.append(Xc.var(axis=0) + eps)
        priors.append(len(Xc) / len(X))
    return {"means": np.array(means), "vars": np.array(variances), "log_prior": np.log(priors)}


def _score_gnb(state, X):
    ll = []
    for c in (0, 1):
        m, v = state["means"][c], state["vars"][c]
        ll.append(state["log_prior"][c] - 0.5 * np.sum(np.log(2 * np.pi * v) + (X - m) ** 2 / v, axis=1))
    return sigmoid(ll[1] - ll[0])


# ----------------------------------------------------------------------------
# neighbours

def _fit_knn(X, y, params, seed, flags):
    mu, sd = _standardizer(X)
    return {"mu": mu, "sd": sd, "Z": (X - mu) / sd, "y": y.astype(float)}


def _neighbours(state, X, k):
    Q = _std(state, X)
    Z = state["Z"]
    d2 = (Q * Q).sum(1)[:, None] - 2.0 * Q @ Z.T + (Z * Z).sum(1)[None, :]
    d2 = np.maximum(d2, 0.0)
    k = min(int(k), Z.shape[0])
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return order, np.take_along_axis(d2, order, axis=1)


def _score_knn(state, X):
    order, _ = _neighbours(state, X, state["k"])
    return state["y"][order].mean(axis=1)


def _score_wknn(state, X):
    order, d2 = _neighbours(state, X, state["k"])
    w = 1.0 / (np.sqrt(d2) + 1e-6)
    return (w * state["y"][order]).sum(1) / w.sum(1)


def _with_k(fit):
    def inner(X, y, params, seed, flags):
        state = fit(X, y, params, seed, flags)
        state["k"] = np.int64(params["k"])
        return state
    return inner


# ----------------------------------------------------------------------------
# trees

def _fit_tree(X, y, params, seed, flags):
    t = trees.grow_tree(X, y, params.get("max_depth"), params.get("min_leaf", 1), None, seed)
    return {"tree": t}


def _score_tree(state, X):
    return trees.tree_leaf_values(state["tree"], X)


def _max_features(spec, p):
    if spec is None:
        return p
    if spec == "sqrt":
        return max(1, int(np.ceil(np.sqrt(p))))
    if spec == "third":
        return max(1, p // 3)
    return int(spec)


def _fit_forest(X, y, params, seed, flags):
    mf = _max_features(params.get("max_features", "sqrt"), X.shape[1])
    forest = trees.grow_forest(X, y, params.get("n_trees", 100), params.get("max_depth"),
                               params.get("min_leaf", 1), mf, params.get("bootstrap", True), seed)
    return {"trees": forest}


def _score_forest(state, X):
    return trees.forest_score(state["trees"], X)


def _fit_boosted_stumps(X, y, params, seed, flags):
    """Gradient boosting of depth-1 regression trees on the logistic loss."""
    rng = np.random.default_rng(seed)
    n, p = X.shape
    rounds = int(params["rounds"])
    lr = float(params.get("learning_rate", 0.1))
    subsample = float(params.get("subsample", 1.0))
    base = float(np.log(y.mean() / (1 - y.mean())))
    F = np.full(n, base)
    feats = np.zeros(rounds, dtype=np.int64)
    thrs = np.zeros(rounds)
    vals = np.zeros((rounds, 2))
    presorted = _presort(X)
    for r in range(rounds):
        if subsample >= 1.0:
            rows, sorted_rows = np.arange(n), presorted
        else:
            rows = np.sort(rng.choice(n, max(2, int(subsample * n)), replace=False))
            sorted_rows = None
        prob = sigmoid(F[rows])
        f, thr = best_stump(X[rows], y[rows] - prob, sorted_rows)
        left = X[rows, f] <= thr
        h = prob * (1 - prob)
        g = y[rows] - prob
        lv = g[left].sum() / max(h[left].sum(), 1e-12)
        rv = g[~left].sum() / max(h[~left].sum(), 1e-12)
        feats[r], thrs[r], vals[r] = f, thr, (lv, rv)
        F += lr * np.where(X[:, f] <= thr, lv, rv)
    return {"base": np.float64(base), "lr": np.float64(lr), "feature": feats, "threshold": thrs, "values": vals}


def _presort(X):
    order = np.argsort(X, axis=0, kind="stable")
    Xs = np.take_along_axis(X, order, axis=0)
    return order, Xs, Xs[1:] != Xs[:-1]


def best_stump(X, target, presorted=None):
    """Exhaustive least-squares stump on `target`: returns (feature, threshold).

    Candidate thresholds are midpoints of consecutive distinct values; the
    first best (feature-major, then increasing threshold) wins.
    """
    n, p = X.shape
    order, Xs, distinct = _presort(X) if presorted is None else presorted
    G = np.cumsum(target[order], axis=0)[:-1]
    total = target.sum()
    n_left = np.arange(1, n)[:, None]
    gain = G * G / n_left + (total - G) ** 2 / (n - n_left)
    gain = np.where(distinct, gain, -np.inf)
    flat = int(np.argmax(gain.T.ravel()))
    f, i = divmod(flat, n - 1)
    if not np.isfinite(gain[i, f]):
        return 0, np.inf
    return int(f), float(0.5 * (Xs[i, f] + Xs[i + 1, f]))


def _score_boosted_stumps(state, X):
    F = np.full(len(X), float(state["base"]))
    for f, thr, (lv, rv) in zip(state["feature"], state["threshold"], state["values"]):
        F += state["lr"] * np.where(X[:, f] <= thr, lv, rv)
    return sigmoid(F)


# ----------------------------------------------------------------------------
# margin classifiers

def _hinge_descent(Z, y, lam, iters):
    """Full-batch subgradient descent on lam/2 |w|^2 + mean hinge (Pegasos steps)."""
    n, p = Z.shape
    A = np.hstack([Z, np.ones((n, 1))])
    s = 2.0 * y - 1.0
    w = np.zeros(p + 1)
    avg = np.zeros(p + 1)
    start = iters // 2
    for t in range(1, iters + 1):
        viol = s * (A @ w) < 1.0
        grad = lam * w - (A[viol] * s[viol, None]).sum(0) / n
        w = w - grad / (lam * t)
        if t > start:
            avg += w
    return avg / (iters - start)


def _fit_linear_svm(X, y, params, seed, flags):
    mu, sd = _standardizer(X)
    Z = (X - mu) / sd
    w = _hinge_descent(Z, y, params["lam"], params.get("iters", 200))
    margins = Z @ w[:-1] + w[-1]
    return {"mu": mu, "sd": sd, "w": w, "slope": np.float64(_fit_slope(margins, y))}


def _score_linear_svm(state, X):
    w = state["w"]
    return sigmoid(state["slope"] * (_std(state, X) @ w[:-1] + w[-1]))


def _rff(state, Z):
    D = state["omega"].shape[1]
    return np.sqrt(2.0 / D) * np.cos(Z @ state["omega"] + state["phase"])


def _fit_rbf_svm(X, y, params, seed, flags):
    rng = np.random.default_rng(seed)
    mu, sd = _standardizer(X)
    Z = (X - mu) / sd
    D = int(params.get("n_features", 100))
    state = {"mu": mu, "sd": sd,
             "omega": rng.normal(scale=np.sqrt(2.0 * params["gamma"]), size=(X.shape[1], D)),
             "phase": rng.uniform(0, 2 * np.pi, size=D)}
    R = _rff(state, Z)
    w = _hinge_descent(R, y, params["lam"], params.get("iters", 200))
    state["w"] = w
    state["slope"] = np.float64(_fit_slope(R @ w[:-1] + w[-1], y))
    return state


def _score_rbf_svm(state, X):
    R = _rff(state, _std(state, X))
    w = state["w"]
    return sigmoid(state["slope"] * (R @ w[:-1] + w[-1]))


# ----------------------------------------------------------------------------
# neural networks

NET_ITERS = 200
NET_DECAY = 1.0

def _net_unpack(theta, p, h):
    W1 = theta[: p * h].reshape(p, h)
    b1 = theta[p * h: p * h + h]
    w2 = theta[p * h + h: p * h + 2 * h]
    b2 = theta[-1]
    return W1, b1, w2, b2


@njit(cache=True)
def _descend(Z, y, W, b1, w2, b2, decay, lr, momentum, iters):
    """Full-batch gradient descent (heavy-ball momentum) on the penalized log loss.

    W holds the input weights as (hidden, inputs); updated in place.
    """
    n, p = Z.shape
    h = w2.shape[0]
    H = np.empty(h)
    vW = np.zeros((h, p))
    vb1 = np.zeros(h)
    vw2 = np.zeros(h)
    vb2 = 0.0
    gW = np.empty((h, p))
    gb1 = np.empty(h)
    gw2 = np.empty(h)
    for _ in range(iters):
        gW[:, :] = 0.0
        gb1[:] = 0.0
        gw2[:] = 0.0
        gb2 = 0.0
        for i in range(n):
            z = b2
            for j in range(h):
                a = b1[j]
                for k in range(p):
                    a += W[j, k] * Z[i, k]
                H[j] = 1.0 / (1.0 + np.exp(-a))
                z += H[j] * w2[j]
            dz = (1.0 / (1.0 + np.exp(-z)) - y[i]) / n
            gb2 += dz
            for j in range(h):
                gw2[j] += H[j] * dz
                da = dz * w2[j] * H[j] * (1.0 - H[j])
                gb1[j] += da
                for k in range(p):
                    gW[j, k] += da * Z[i, k]
        # weight decay on weights only, scaled like a prior over n rows
        for j in range(h):
            gw2[j] += decay * w2[j] / n
            for k in range(p):
                gW[j, k] += decay * W[j, k] / n
        for j in range(h):
            for k in range(p):
                vW[j, k] = momentum * vW[j, k] - lr * gW[j, k]
                W[j, k] += vW[j, k]
            vb1[j] = momentum * vb1[j] - lr * gb1[j]
            b1[j] += vb1[j]
            vw2[j] = momentum * vw2[j] - lr * gw2[j]
            w2[j] += vw2[j]
        vb2 = momentum * vb2 - lr * gb2
        b2 += vb2
    return b2


def _train_net(Z, y, width, decay, iters, seed, lr=0.5, momentum=0.9):
    rng = np.random.default_rng(seed)
    p = Z.shape[1]
    W1 = rng.normal(scale=1 / np.sqrt(p), size=(p, width))
    b1 = np.zeros(width)
    w2 = rng.normal(scale=1 / np.sqrt(width), size=width)
    W = np.ascontiguousarray(W1.T)
    b2 = _descend(np.ascontiguousarray(Z, dtype=np.float64), np.asarray(y, dtype=np.float64),
                  W, b1, w2, 0.0, float(decay), float(lr), float(momentum), int(iters))
    return np.r_[W.T.ravel(), b1, w2, b2]


def _fit_nn(X, y, params, seed, flags):
    mu, sd = _standardizer(X)
    Z = (X - mu) / sd
    width = int(params["width"])
    theta = _train_net(Z, y, width, params.get("decay", NET_DECAY), params.get("iters", NET_ITERS), seed)
    return {"mu": mu, "sd": sd, "width": np.int64(width), "theta": theta}


def _net_score(theta, Z, width):
    W1, b1, w2, b2 = _net_unpack(theta, Z.shape[1], int(width))
    return sigmoid(sigmoid(Z @ W1 + b1) @ w2 + b2)


def _score_nn(state, X):
    return _net_score(state["theta"], _std(state, X), state["width"])


def _fit_avnn(X, y, params, seed, flags):
    mu, sd = _standardizer(X)
    Z = (X - mu) / sd
    width = int(params["width"])
    seeds = np.random.default_rng(seed).integers(2**31 - 1, size=int(params.get("repeats", 5)))
    thetas = [_train_net(Z, y, width, params.get("decay", NET_DECAY), params.get("iters", NET_ITERS), int(s))
              for s in seeds]
    return {"mu": mu, "sd": sd, "width": np.int64(width), "thetas": np.array(thetas)}


def _score_avnn(state, X):
    Z = _std(state, X)
    return np.mean([_net_score(t, Z, state["width"]) for t in state["thetas"]], axis=0)


# ----------------------------------------------------------------------------
# registry

KINDS = {
    "logistic_regression": (_fit_logistic, _score_logistic),
    "penalized_logistic": (_fit_logistic, _score_logistic),
    "lda": (_fit_lda, _score_lda),
    "gaussian_naive_bayes": (_fit_gnb, _score_gnb),
    "knn": (_with_k(_fit_knn), _score_knn),
    "decision_tree": (_fit_tree, _score_tree),
    "random_forest": (_fit_forest, _score_forest),
    "linear_svm": (_fit_linear_svm, _score_linear_svm),
    "rbf_svm_approx": (_fit_rbf_svm, _score_rbf_svm),
    "neural_net_1h": (_fit_nn, _score_nn),
    "model_avg_neural_net": (_fit_avnn, _score_avnn),
    "boosted_stumps": (_fit_boosted_stumps, _score_boosted_stumps),
    "bayes_linear": (_fit_bayes_linear, _score_bayes_linear),
    "weighted_knn": (_with_k(_fit_knn), _score_wknn),
}

DEFAULT_GRIDS = {
    "logistic_regression": {"l2": (1e-4,)},
    "penalized_logistic": {"l2": (0.003, 0.03, 0.3)},
    "lda": {"shrinkage": (0.0, 0.3)},
    "gaussian_naive_bayes": {"var_smoothing": (1e-9, 1e-2)},
    "knn": {"k": (7, 15, 31)},
    "decision_tree": {"max_depth": (2, 3, 5), "min_leaf": (5,)},
    "random_forest": {"n_trees": (100,), "max_features": ("sqrt",), "min_leaf": (3,)},
    "linear_svm": {"lam": (0.01, 0.1)},
    "rbf_svm_approx": {"gamma": (0.01, 0.05), "lam": (0.001,)},
    "neural_net_1h": {"width": (4, 8, 16), "decay": (1.0,)},
    "model_avg_neural_net": {"width": (4, 8), "decay": (1.0,)},
    "boosted_stumps": {"rounds": (50, 150), "learning_rate": (0.1,)},
    "bayes_linear": {"prior_var": (0.1, 1.0)},
    "weighted_knn": {"k": (15, 31)},
}

# Which row of the original individual-model table each kind stands in for.
ROSTER_TABLE = {
    "logistic_regression": "logistic regression",
    "penalized_logistic": "penalized logistic regression",
    "lda": "LDA",
    "gaussian_naive_bayes": "naive Bayes",
    "knn": "K-nearest neighbor",
    "decision_tree": "sparsed LDA / weighted subspace random forest (tree-based substitute)",
    "random_forest": "random forest",
    "linear_svm": "SVM with class weight",
    "rbf_svm_approx": "SVM with radial kernel",
    "neural_net_1h": "neural network",
    "model_avg_neural_net": "model average neural network",
    "boosted_stumps": "stochastic gradient boosting",
    "bayes_linear": "Bayes generalized linear model",
    "weighted_knn": "Gaussian process with radial kernel (kernel-smoother substitute)",
}


def default_roster(seed=0):
    """The 14 learner kinds with their default grids, in a fixed order."""
    return [LearnerSpec(kind, DEFAULT_GRIDS[kind], seed) for kind in KINDS]


# ----------------------------------------------------------------------------
# fitting, scoring, tuning

def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(float).ravel()
    if X.ndim != 2 or len(X) != len(y):
        raise DimensionMismatch(f"X of shape {X.shape} does not match {len(y)} labels")
    counts = np.bincount(y.astype(int), minlength=2)
    if counts.min() < 2:
        raise DegenerateClass(f"need at least 2 rows per class, got {counts.tolist()}")
    return X, y


def fit(spec, hyperparams, X, y, seed=None):
    """Train one learner; deterministic for a given seed (defaults to spec.seed)."""
    X, y = _check_xy(X, y)
    fit_fn, _ = KINDS[spec.kind]
    flags = {}
    state = fit_fn(X, y, dict(hyperparams), spec.seed if seed is None else int(seed), flags)
    return TrainedClassifier(spec, dict(hyperparams), state, X.shape[1], flags)


def predict_score(model, X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.shape[1] != model.feature_count:
        raise DimensionMismatch(f"{model.kind} expects {model.feature_count} features, got {X2.shape[1]}")
    s = np.clip(KINDS[model.kind][1](model.state, X2), 0.0, 1.0)
    return float(s[0]) if single else s


def predict_label(model, X):
    s = predict_score(model, X)
    return int(s >= 0.5) if np.isscalar(s) else (s >= 0.5).astype(np.int64)


def stratified_folds(y, folds, seed):
    """Assign each row a fold id so both classes spread evenly over folds."""
    rng = np.random.default_rng(seed)
    y = np.asarray(y).astype(int)
    fold_of = np.empty(len(y), dtype=np.int64)
    for c in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == c))
        fold_of[idx] = np.arange(len(idx)) % folds
    return fold_of


def cv_accuracy(spec, params, X, y, folds=3, seed=None):
    """Mean held-out accuracy over stratified folds."""
    X, y = _check_xy(X, y)
    seed = spec.seed if seed is None else seed
    fold_of = stratified_folds(y, folds, seed)
    accs = []
    for f in range(folds):
        tr, va = fold_of != f, fold_of == f
        for part in (tr, va):
            if len(np.unique(y[part])) < 2:
                raise DegenerateFold(f"fold {f} lacks a class")
        model = fit(spec, params, X[tr], y[tr], seed=seed)
        accs.append(np.mean(predict_label(model, X[va]) == y[va]))
    return float(np.mean(accs))


def tune(spec, X, y, folds=3, seed=None):
    """Grid point with the best mean fold accuracy; first grid point wins ties."""
    if folds < 2:
        raise ValueError("folds must be at least 2")
    points = list(spec.grid_points())
    if len(points) == 1:
        return points[0]
    scores = [cv_accuracy(spec, p, X, y, folds, seed) for p in points]
    return points[int(np.argmax(scores))]


# ----------------------------------------------------------------------------
# persistence

def to_record(model):
    return {
        "format": "twostep.classifier",
        "version": serialize.FORMAT_VERSION,
        "kind": model.kind,
        "hyper_grid": {k: list(v) for k, v in model.spec.hyper_grid.items()},
        "seed": model.spec.seed,
        "hyperparams": model.hyperparams,
        "feature_count": model.feature_count,
        "flags": model.flags,
        "state": serialize.encode(model.state),
    }


def from_record(rec):
    if rec.get("version") != serialize.FORMAT_VERSION:
        raise VersionMismatch(f"classifier record version {rec.get('version')}")
    spec = LearnerSpec(rec["kind"], {k: tuple(v) for k, v in rec["hyper_grid"].items()}, rec["seed"])
    return TrainedClassifier(spec, rec["hyperparams"], serialize.decode(rec["state"]),
                             rec["feature_count"], rec.get("flags", {}))
