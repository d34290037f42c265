"""Replicated evaluation of the stacking variants, reports and model bundles.

One replicate draws a fresh partition, fits PCA on the training pool, tunes
and fits the roster, drops learners below the accuracy threshold on
validation0 and fits every requested ensemble. Only the test rows are used
for scoring.
"""

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dataset, ensemble, learners, metrics, stats, synthgen
from .errors import (
    ConfigError,
    CorruptManifest,
    SchemaMismatch,
    VersionMismatch,
)

log = logging.getLogger(__name__)

ENSEMBLES = ("two_step_14", "two_step_3", "trad_stack_14", "trad_stack_3",
             "weighted_vote_14", "weighted_vote_3", "two_step_glps_only")
OUTPUT_ENV = "TWOSTEP_OUT"


@dataclass
class ExperimentConfig:
    data_path: str = None
    generator: dict = None  # GeneratorConfig fields; None means the default calibration
    roster: list = field(default_factory=lambda: list(learners.KINDS))
    grids: dict = field(default_factory=dict)  # per-kind grid overrides
    K: int = 10
    replicates: int = 50
    seed: int = 0
    pc_policy: str = "paper_fixed"
    exclusion_threshold: float = 0.60
    min_kept: int = 3
    ensembles: list = field(default_factory=lambda: list(ENSEMBLES))
    tune_folds: int = 3
    first_kind: str = "random_forest"
    second_kind: str = "random_forest"
    workers: int = 1
    min_success: float = 0.9
    output_dir: str = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if not 0 < self.exclusion_threshold < 1:
            raise ConfigError("exclusion_threshold must be in (0, 1)")
        if self.K < 1:
            raise ConfigError("K must be at least 1")
        unknown = set(self.ensembles) - set(ENSEMBLES)
        if unknown:
            raise ConfigError(f"unknown ensembles {sorted(unknown)}")
        bad = set(self.roster) - set(learners.KINDS)
        if bad:
            raise ConfigError(f"unknown learner kinds {sorted(bad)}")
        if self.pc_policy not in ("paper_fixed", "elbow"):
            raise ConfigError(f"unknown pc_policy {self.pc_policy!r}")
        for kind in (self.first_kind, self.second_kind):
            if kind not in ensemble.COMBINER_KINDS:
                raise ConfigError(f"unknown combiner kind {kind!r}")

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def to_dict(self):
        return asdict(self)

    def learner_specs(self, seed=0):
        return [learners.LearnerSpec(k, {n: tuple(v) for n, v in self.grids.get(k, learners.DEFAULT_GRIDS[k]).items()},
                                     seed) for k in self.roster]

    def generator_config(self):
        if self.generator is None:
            return synthgen.default_calibration()
        base = synthgen.default_calibration().to_dict()
        base.update(self.generator)
        return synthgen.GeneratorConfig.from_dict(base)


def load_data(cfg):
    if cfg.data_path:
        return dataset.load_cohort(cfg.data_path)
    return synthgen.generate_cohort(cfg.generator_config())


# ----------------------------------------------------------------------------
# one replicate

def _tune_roster(specs, X, y, rows, folds, audit):
    audit.record("tune", rows, X)
    roster, cv = [], []
    for spec in specs:
        points = list(spec.grid_points())
        if len(points) == 1:
            params, score = points[0], learners.cv_accuracy(spec, points[0], X[rows], y[rows], folds)
        else:
            scores = [learners.cv_accuracy(spec, p, X[rows], y[rows], folds) for p in points]
            best = int(np.argmax(scores))
            params, score = points[best], scores[best]
        roster.append((spec, params))
        cv.append(score)
    return roster, cv


def _accuracy(model, X, y):
    return float(np.mean(learners.predict_label(model, X) == y))


def _kept(val_acc, threshold, min_kept):
    kept = [i for i, a in enumerate(val_acc) if a >= threshold]
    if len(kept) < min_kept:
        kept = ensemble.top_learners(val_acc, min(min_kept, len(val_acc)))
    return kept


def _evaluate(labels, scores, truth):
    cm = metrics.confusion(labels, truth)
    roc = metrics.roc_and_auc(scores, truth)
    return {"accuracy": metrics.accuracy(cm), "sensitivity": metrics.sensitivity(cm),
            "specificity": metrics.specificity(cm), "auc": roc.auc}


class _Stack:
    """Fitted learners and audit for one feature matrix within a replicate."""

    def __init__(self, X, y, partition, specs, cfg, seed):
        self.X, self.y, self.partition, self.seed = X, y, partition, seed
        self.audit = ensemble.AuditLog()
        pool, val0 = partition.training_pool, partition.validation0
        self.roster, self.cv_acc = _tune_roster(specs, X, y, pool, cfg.tune_folds, self.audit)
        self.pool_fitted = ensemble.fit_roster(X, y, pool, self.roster, seed, 0, self.audit)
        self.val0_acc = [_accuracy(m, X[val0], y[val0]) for m in self.pool_fitted]
        self.kept = _kept(self.val0_acc, cfg.exclusion_threshold, cfg.min_kept)
        self.split_fitted = [ensemble.fit_roster(X, y, tr, self.roster, seed, k, self.audit)
                             for k, (tr, _) in enumerate(partition.first_step_splits)]

    def sub(self, cols):
        return ([self.roster[i] for i in cols], [[f[i] for i in cols] for f in self.split_fitted],
                [self.pool_fitted[i] for i in cols])

    def two_step(self, cols, cfg):
        roster, split_fitted, _ = self.sub(cols)
        return ensemble.fit_two_step(self.X, self.y, self.partition, roster, self.seed,
                                     first_kind=cfg.first_kind, second_kind=cfg.second_kind,
                                     fitted=split_fitted, audit=self.audit)

    def single_layer(self, cols, kind, uses_labels=False):
        roster, _, pool_fitted = self.sub(cols)
        p = self.partition
        return ensemble.fit_first_step(self.X, self.y, p.training_pool, p.validation0, roster, self.seed,
                                       kind, uses_labels=uses_labels, fitted=pool_fitted, audit=self.audit)


def run_replicate(d, cfg, r):
    """Fit and score every requested ensemble on replicate r; returns a result dict."""
    rep_seed = ensemble.derive_seed(cfg.seed, r)
    partition = dataset.make_paper_partition(d, cfg.K, rep_seed)
    test = np.asarray(partition.test)
    y = d.y
    specs = cfg.learner_specs(rep_seed)

    pca_audit = ensemble.AuditLog()
    pca_audit.record("pca", partition.training_pool)
    models = stats.fit_block_models(d, rows=partition.training_pool, policy=cfg.pc_policy)
    X = stats.build_model_input(d, models)

    main = _Stack(X, y, partition, specs, cfg, rep_seed)
    top3 = [main.kept[i] for i in ensemble.top_learners(
        ensemble.first_step_validation_accuracy([[f[i] for i in main.kept] for f in main.split_fitted],
                                                X, y, partition.first_step_splits), 3)]

    out = {"replicate": r, "seed": rep_seed, "partition": partition.fingerprint(),
           "kept": [specs[i].kind for i in main.kept], "top3": [specs[i].kind for i in top3],
           "ensembles": {}, "individuals": {}, "scores": {}}
    for i, spec in enumerate(specs):
        out["individuals"][spec.kind] = {
            "test_accuracy": _accuracy(main.pool_fitted[i], X[test], y[test]),
            "test_auc": metrics.roc_and_auc(learners.predict_score(main.pool_fitted[i], X[test]), y[test]).auc,
            "cv_accuracy": main.cv_acc[i],
            "validation0_accuracy": main.val0_acc[i],
            "excluded": i not in main.kept,
            "hyperparams": main.roster[i][1],
        }

    kept_rows = [out["individuals"][specs[i].kind] for i in main.kept]
    out["individual_mean"] = {"accuracy": float(np.mean([r["test_accuracy"] for r in kept_rows])),
                              "auc": float(np.mean([r["test_auc"] for r in kept_rows]))}

    wanted = set(cfg.ensembles)
    for name in ENSEMBLES:
        if name not in wanted:
            continue
        if name == "two_step_glps_only":
            Xg = stats.glps_only_input(d)
            glps = _Stack(Xg, y, partition, specs, cfg, rep_seed)
            m = glps.two_step(glps.kept, cfg)
            labels, scores = ensemble.predict_two_step(m, Xg[test])
            audits = [(glps.audit, Xg)]
        else:
            cols = main.kept if name.endswith("_14") else top3
            if name.startswith("two_step"):
                m = main.two_step(cols, cfg)
                labels, scores = ensemble.predict_two_step(m, X[test])
            elif name.startswith("trad_stack"):
                m = main.single_layer(cols, "random_forest")
                labels, scores = m.predict(X[test]), m.score(X[test])
            else:
                # the weighted vote weighs hard labels, as a vote does
                m = main.single_layer(cols, "linear_least_squares", uses_labels=True)
                # ROC of the vote uses the pre-threshold weighted sum
                labels, scores = m.predict(X[test]), m.score(X[test], raw=True)
        out["ensembles"][name] = _evaluate(labels, scores, y[test])
        out["scores"][name] = (np.asarray(scores, dtype=float), y[test].copy())

    violations = 0
    for audit, Xm in [(pca_audit, None), (main.audit, X)] + (
            [(glps.audit, Xg)] if "two_step_glps_only" in wanted else []):
        bad, bad_rows = audit.violations(test, None if Xm is None else Xm[test])
        violations += len(bad) + bad_rows
    seen = set(main.audit.seen().tolist()) | set(pca_audit.seen().tolist())
    out["leakage_violations"] = violations
    out["fitted_subjects"] = len(seen)
    if r == 0:
        out["pca_models"] = models
    return out


def _run_one(args):
    d, cfg, r = args
    try:
        return run_replicate(d, cfg, r)
    except Exception as exc:  # a failed replicate is reported, not fatal
        log.exception("replicate %d failed", r)
        return {"replicate": r, "failed": f"{type(exc).__name__}: {exc}"}


# ----------------------------------------------------------------------------
# aggregation and reports

def _mean_sd(values):
    v = np.asarray(values, dtype=float)
    return {"mean": float(v.mean()), "sd": float(v.std(ddof=1)) if len(v) > 1 else 0.0}


@dataclass
class EvaluationReport:
    config: dict
    replicates: list
    ensembles: dict
    individuals: dict
    individual_mean: dict  # mean over the learners kept in each replicate
    failures: list
    leakage_violations: int
    ok: bool
    roc: dict = field(default_factory=dict, repr=False)
    screening: list = field(default_factory=list, repr=False)
    pca_models: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {"config": self.config, "replicate_count": len(self.replicates) + len(self.failures),
                "succeeded": len(self.replicates), "failures": self.failures,
                "leakage_violations": self.leakage_violations, "ok": self.ok,
                "ensembles": self.ensembles, "individuals": self.individuals,
                "individual_mean": self.individual_mean,
                "replicates": self.replicates}

    def to_json(self):
        return json.dumps(_round_floats(self.to_dict()), indent=2, sort_keys=True) + "\n"


def _round_floats(obj, digits=12):
    if isinstance(obj, float):
        return round(obj, digits)
    if isinstance(obj, dict):
        return {k: _round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v, digits) for v in obj]
    return obj


def aggregate(cfg, results, screening=None):
    ok_results = [r for r in results if "failed" not in r]
    failures = [{"replicate": r["replicate"], "error": r["failed"]} for r in results if "failed" in r]
    ens, ind, roc = {}, {}, {}
    for name in cfg.ensembles:
        rows = [r["ensembles"][name] for r in ok_results]
        if rows:
            ens[name] = {m: _mean_sd([x[m] for x in rows]) for m in ("accuracy", "auc", "sensitivity", "specificity")}
            scores = np.concatenate([r["scores"][name][0] for r in ok_results])
            truth = np.concatenate([r["scores"][name][1] for r in ok_results])
            roc[name] = metrics.roc_and_auc(scores, truth)
    for kind in cfg.roster:
        rows = [r["individuals"][kind] for r in ok_results]
        if rows:
            ind[kind] = {
                "test_accuracy": _mean_sd([x["test_accuracy"] for x in rows]),
                "test_auc": _mean_sd([x["test_auc"] for x in rows]),
                "cv_accuracy": _mean_sd([x["cv_accuracy"] for x in rows]),
                "validation0_accuracy": _mean_sd([x["validation0_accuracy"] for x in rows]),
                "excluded_in": int(sum(x["excluded"] for x in rows)),
            }
    individual_mean = {}
    if ok_results:
        individual_mean = {m: _mean_sd([r["individual_mean"][m] for r in ok_results]) for m in ("accuracy", "auc")}
    replicate_log = []
    for r in ok_results:
        replicate_log.append({k: v for k, v in r.items() if k not in ("scores", "pca_models")})
    violations = int(sum(r["leakage_violations"] for r in ok_results))
    success = len(ok_results) / max(1, len(results))
    report = EvaluationReport(
        config=cfg.to_dict(), replicates=replicate_log, ensembles=ens, individuals=ind,
        individual_mean=individual_mean,
        failures=failures, leakage_violations=violations,
        ok=bool(success >= cfg.min_success and violations == 0),
        roc=roc, screening=screening or [],
        pca_models=next((r["pca_models"] for r in ok_results if "pca_models" in r), {}))
    return report


def run_experiment(cfg, d=None):
    """Run all replicates and aggregate. Writes reports when cfg.output_dir is set."""
    if d is None:
        d = load_data(cfg)
    jobs = [(d, cfg, r) for r in range(cfg.replicates)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    report = aggregate(cfg, results, stats.screen_features(d))
    if cfg.output_dir:
        emit_reports(report, cfg.output_dir)
    return report


def tables_text(report):
    lines = ["Individual classifiers (mean over replicates, sd in brackets)",
             f"{'model':24s} {'test acc':>16s} {'test auc':>16s} {'cv acc':>16s} {'excluded':>9s}"]
    for kind, row in report.individuals.items():
        t, u, c = row["test_accuracy"], row["test_auc"], row["cv_accuracy"]
        lines.append(f"{kind:24s} {t['mean']:.3f} ({t['sd']:.3f})    {u['mean']:.3f} ({u['sd']:.3f})"
                     f"    {c['mean']:.3f} ({c['sd']:.3f})    {row['excluded_in']:5d}")
    if report.individual_mean:
        a, u = report.individual_mean["accuracy"], report.individual_mean["auc"]
        lines.append(f"{'mean of kept learners':24s} {a['mean']:.3f} ({a['sd']:.3f})    {u['mean']:.3f} ({u['sd']:.3f})")
    lines += ["", "Ensembles (mean over replicates, sd in brackets)",
              f"{'model':24s} {'accuracy':>16s} {'auc':>16s} {'sens':>7s} {'spec':>7s}"]
    for name, row in report.ensembles.items():
        a, u = row["accuracy"], row["auc"]
        lines.append(f"{name:24s} {a['mean']:.3f} ({a['sd']:.3f})    {u['mean']:.3f} ({u['sd']:.3f})"
                     f"  {row['sensitivity']['mean']:.3f}  {row['specificity']['mean']:.3f}")
    return "\n".join(lines) + "\n"


def emit_reports(report, out_dir):
    """Write report.json, tables.txt, config.json, roc_<name>.csv, screening.csv, pca_loadings.csv."""
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def put(name, text):
        path = os.path.join(out_dir, name)
        dataset.atomic_write(path, text)
        written.append(path)

    put("report.json", report.to_json())
    put("config.json", json.dumps(report.config, indent=2, sort_keys=True) + "\n")
    put("tables.txt", tables_text(report))
    for name, roc in report.roc.items():
        put(f"roc_{name}.csv", roc.to_csv())
    if report.screening:
        put("screening.csv", stats.screening_to_csv(report.screening))
    if report.pca_models:
        put("pca_loadings.csv", stats.loadings_to_csv(report.pca_models))
    return written


# ----------------------------------------------------------------------------
# trained model bundles: PCA reduction + two-step model

BUNDLE_FORMAT = "twostep.bundle"
BUNDLE_VERSION = 1


@dataclass(frozen=True, eq=False)
class ModelBundle:
    schema_columns: tuple
    pca_models: dict
    model: ensemble.TwoStepModel

    def reduce(self, d):
        return stats.build_model_input(d, self.pca_models)


def train_bundle(d, cfg, seed=None):
    """Fit PCA, tune the roster and fit a two-step model on one partition.

    Returns (bundle, partition, test metrics).
    """
    seed = cfg.seed if seed is None else seed
    partition = dataset.make_paper_partition(d, cfg.K, seed)
    models = stats.fit_block_models(d, rows=partition.training_pool, policy=cfg.pc_policy)
    X = stats.build_model_input(d, models)
    specs = cfg.learner_specs(seed)
    audit = ensemble.AuditLog()
    roster, _ = _tune_roster(specs, X, d.y, partition.training_pool, cfg.tune_folds, audit)
    m = ensemble.fit_two_step(X, d.y, partition, roster, seed, first_kind=cfg.first_kind,
                              second_kind=cfg.second_kind, audit=audit)
    test = partition.test
    labels, scores = ensemble.predict_two_step(m, X[test])
    return ModelBundle(d.schema.columns, models, m), partition, _evaluate(labels, scores, d.y[test])


def _pca_to_record(m):
    return {"block_name": m.block_name, "center": m.center.tolist(), "scale": m.scale.tolist(),
            "loadings": m.loadings.tolist(), "eigenvalues": m.eigenvalues.tolist(), "retained": m.retained}


def _pca_from_record(r):
    return stats.PcaModel(r["block_name"], np.array(r["center"]), np.array(r["scale"]),
                          np.array(r["loadings"]), np.array(r["eigenvalues"]), r["retained"])


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_model(path, bundle):
    manifest = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "schema_columns": list(bundle.schema_columns),
        "pca_models": {b: _pca_to_record(m) for b, m in bundle.pca_models.items()},
        "model": ensemble.two_step_to_record(bundle.model),
    }
    doc = {"manifest": manifest, "sha256": hashlib.sha256(_canonical(manifest).encode()).hexdigest()}
    dataset.atomic_write(path, _canonical(doc))


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        manifest, digest = doc["manifest"], doc["sha256"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CorruptManifest(f"{path}: {exc}") from None
    if hashlib.sha256(_canonical(manifest).encode()).hexdigest() != digest:
        raise CorruptManifest(f"{path}: checksum mismatch")
    if manifest.get("format") != BUNDLE_FORMAT or manifest.get("version") != BUNDLE_VERSION:
        raise VersionMismatch(f"{path}: unsupported bundle {manifest.get('format')!r} v{manifest.get('version')}")
    pcas = {b: _pca_from_record(r) for b, r in manifest["pca_models"].items()}
    return ModelBundle(tuple(manifest["schema_columns"]), pcas, ensemble.two_step_from_record(manifest["model"]))


def subject_row(bundle, row):
    """Validate one subject (mapping name -> value, or a sequence in schema order)."""
    cols = bundle.schema_columns
    if isinstance(row, dict):
        missing = [c for c in cols if c not in row]
        if missing:
            raise SchemaMismatch(f"missing column {missing[0]!r}")
        values = [row[c] for c in cols]
    else:
        values = list(row)
        if len(values) < len(cols):
            raise SchemaMismatch(f"missing column {cols[len(values)]!r} ({len(values)} of {len(cols)} values)")
        if len(values) > len(cols):
            raise SchemaMismatch(f"{len(values)} values for {len(cols)} columns")
    try:
        x = np.array([float(v) for v in values])
    except (TypeError, ValueError) as exc:
        raise SchemaMismatch(f"non-numeric value: {exc}") from None
    return dataset.Dataset(dataset.DEFAULT_SCHEMA, x[None, :], np.zeros(1, dtype=np.int64), ("subject",))


def score_subject(bundle_or_path, row):
    """(label, score, first-step scores) for one subject."""
    bundle = load_model(bundle_or_path) if isinstance(bundle_or_path, (str, os.PathLike)) else bundle_or_path
    d = subject_row(bundle, row)
    x = bundle.reduce(d)
    label, score = ensemble.predict_two_step(bundle.model, x[0])
    return label, score, bundle.model.first_step_scores(x)[0].tolist()
