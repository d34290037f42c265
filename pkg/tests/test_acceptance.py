"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the pytest terminal summary under
"acceptance criteria". Tolerances are the ones the criteria state.
"""

import itertools
import time

import numpy as np
import pytest

import conftest
from oracles import (
    concordance_auc,
    jacobi_eigen,
    majority_by_definition,
    t_two_sided_quadrature,
    weighted_by_definition,
)
from twostep import dataset, ensemble, harness, learners, metrics, stats, synthgen
from twostep.learners import LearnerSpec


def record(n, ok, detail):
    line = f"criterion {n:2d} [{'PASS' if ok else 'FAIL'}] {detail}"
    conftest.ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


# ----------------------------------------------------------------------------
# the shared 50-replicate default run, with an independent audit of fit inputs

@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("default_run")
    cfg = harness.ExperimentConfig(output_dir=str(out))
    d = harness.load_data(cfg)

    # map the columns that pass unchanged into the model inputs back to subjects
    passthrough = np.hstack([d.block("gs"), d.block("glps"), d.block("psd"),
                             d.columns(d.schema.categorical_features)])
    by_row = {
        28: {np.ascontiguousarray(r).tobytes(): i for i, r in enumerate(passthrough)},
        10: {np.ascontiguousarray(r).tobytes(): i for i, r in enumerate(stats.glps_only_input(d))},
    }
    by_block = {b: {np.ascontiguousarray(r).tobytes(): i for i, r in enumerate(d.block(b))}
                for b in ("pss", "ssr", "tp")}
    seen, current = {}, {}

    def note(mapping, rows):
        for r in np.ascontiguousarray(rows):
            seen[current["r"]].add(mapping[r.tobytes()])

    run_replicate, fit, pca = harness.run_replicate, learners.fit, stats.pca_from_matrix

    def spy_run(d_, cfg_, r):
        current["r"] = r
        seen[r] = set()
        return run_replicate(d_, cfg_, r)

    def spy_fit(spec, hyperparams, X, y, seed=None):
        X = np.asarray(X, dtype=float)
        note(by_row[X.shape[1]], X[:, 8:] if X.shape[1] == 28 else X)
        return fit(spec, hyperparams, X, y, seed)

    def spy_pca(X, block_name="block", retained=None):
        note(by_block[block_name], X)
        return pca(X, block_name, retained)

    mp = pytest.MonkeyPatch()
    mp.setattr(harness, "run_replicate", spy_run)
    mp.setattr(learners, "fit", spy_fit)
    mp.setattr(stats, "pca_from_matrix", spy_pca)
    try:
        t0 = time.perf_counter()
        report = harness.run_experiment(cfg, d)
        elapsed = time.perf_counter() - t0
    finally:
        mp.undo()
    return {"report": report, "cfg": cfg, "d": d, "seen": seen, "elapsed": elapsed, "out": out}


# ----------------------------------------------------------------------------

def test_criterion_01_voting_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = checked = 0
    for L in range(1, 6):
        patterns = list(itertools.product((0, 1), repeat=L))
        for c in patterns:
            mismatches += ensemble.majority_vote(c) != majority_by_definition(c)
            checked += 1
        for _ in range(20):
            w = rng.normal(0.25, 0.5, L)
            for c in patterns:
                mismatches += ensemble.weighted_vote(c, w) != weighted_by_definition(c, w)
                checked += 1
    elapsed = time.perf_counter() - t0
    record(1, mismatches == 0 and elapsed < 1.0,
           f"voting vs enumeration: {mismatches} mismatches in {checked} cases, {elapsed:.3f}s (< 1s)")


def test_criterion_02_statistics_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst_p = 0.0
    for _ in range(50):
        n1, n2 = rng.integers(2, 10, size=2)
        a = rng.normal(0, rng.uniform(0.5, 2), n1)
        b = rng.normal(rng.normal(), rng.uniform(0.5, 2), n2)
        res = stats.welch_t_test(a, b)
        worst_p = max(worst_p, abs(res.p_value - t_two_sided_quadrature(res.statistic, res.degrees_of_freedom)))
    worst_eig = 0.0
    for _ in range(20):
        A = rng.normal(size=(5, 7))
        S = A @ A.T
        R = S / np.sqrt(np.outer(np.diag(S), np.diag(S)))
        X = rng.standard_normal((30, 5)) @ np.linalg.cholesky(R).T
        m = stats.pca_from_matrix(X, retained=5)
        vals, vecs = jacobi_eigen(np.corrcoef(X, rowvar=False))
        vecs = vecs * np.sign(vecs[np.argmax(np.abs(vecs), axis=0), range(5)])
        worst_eig = max(worst_eig, np.abs(m.eigenvalues - vals).max(), np.abs(m.loadings - vecs).max())
    worst_auc = 0.0
    for _ in range(50):
        n = int(rng.integers(4, 51))
        truth = rng.integers(0, 2, n)
        truth[:2] = [0, 1]
        scores = np.round(rng.random(n), 1)
        worst_auc = max(worst_auc, abs(metrics.roc_and_auc(scores, truth).auc - concordance_auc(scores, truth)))
    elapsed = time.perf_counter() - t0
    ok = worst_p < 1e-6 and worst_eig < 1e-8 and worst_auc < 1e-12 and elapsed < 10
    record(2, ok, f"max |p - quadrature| {worst_p:.1e} (< 1e-6), max PCA error {worst_eig:.1e} (< 1e-8), "
                  f"max |AUC - concordance| {worst_auc:.1e} (< 1e-12), {elapsed:.1f}s (< 10s)")


def test_criterion_03_structural_reductions():
    uniform_ok = all(ensemble.weighted_vote(c, np.full(L, 1.0 / L)) == ensemble.majority_vote(c)
                     for L in range(1, 6) for c in itertools.product((0, 1), repeat=L))
    d = synthgen.generate_cohort(synthgen.default_calibration())
    p = dataset.make_paper_partition(d, 10, seed=3)
    X = stats.build_model_input(d, stats.fit_block_models(d, rows=p.training_pool))
    roster = [(LearnerSpec(k, learners.DEFAULT_GRIDS[k]), {n: v[0] for n, v in learners.DEFAULT_GRIDS[k].items()})
              for k in ("logistic_regression", "gaussian_naive_bayes", "decision_tree", "knn")]
    probe = np.random.default_rng(0).normal(size=(100, X.shape[1])) * X.std(0) + X.mean(0)
    m = ensemble.fit_two_step(X, d.y, p, roster, seed=11, K=1, second_kind="uniform")
    two_step_labels, _ = ensemble.predict_two_step(m, probe)
    k1_ok = np.array_equal(two_step_labels, m.first_steps[0].predict(probe))
    tr, va = p.first_step_splits[0]
    trad = ensemble.fit_traditional_stack(X, d.y, tr, va, roster, seed=11)
    trad_ok = np.array_equal(trad.predict(probe), two_step_labels) and \
        np.array_equal(trad.score(probe), m.first_steps[0].score(probe))
    record(3, uniform_ok and k1_ok and trad_ok,
           f"uniform vote = majority: {uniform_ok}; K=1 two-step = first step on 100 probes: {k1_ok}; "
           f"traditional stack = K=1 two-step: {trad_ok}")


def test_criterion_04_leakage_audit(default_run):
    report, d, cfg = default_run["report"], default_run["d"], default_run["cfg"]
    spy_hits = 0
    for r in report.replicates:
        p = dataset.make_paper_partition(d, cfg.K, r["seed"])
        assert p.fingerprint() == r["partition"]
        spy_hits += len(default_run["seen"][r["replicate"]] & set(p.test.tolist()))
    n = len(report.replicates)
    ok = n == 50 and report.leakage_violations == 0 and spy_hits == 0
    record(4, ok, f"{n} replicates: {report.leakage_violations} audit-log violations, "
                  f"{spy_hits} test subjects seen by learner/PCA fits")


def test_criterion_05_ordering(default_run):
    report = default_run["report"]
    acc = {k: report.ensembles[k]["accuracy"]["mean"] for k in ("two_step_14", "trad_stack_14", "weighted_vote_14")}
    auc = {k: report.ensembles[k]["auc"]["mean"] for k in ("two_step_14", "trad_stack_14", "weighted_vote_14")}
    ind_acc = report.individual_mean["accuracy"]["mean"]
    ind_auc = report.individual_mean["auc"]["mean"]
    acc_order = acc["two_step_14"] > acc["trad_stack_14"] > acc["weighted_vote_14"] > ind_acc
    auc_order = auc["two_step_14"] > auc["trad_stack_14"] > auc["weighted_vote_14"] > ind_auc
    gap = acc["two_step_14"] - acc["trad_stack_14"]
    fast = default_run["elapsed"] <= 600
    record(5, acc_order and auc_order and gap >= 0.02 and fast,
           f"accuracy {acc['two_step_14']:.3f} > {acc['trad_stack_14']:.3f} > {acc['weighted_vote_14']:.3f} "
           f"> {ind_acc:.3f}: {acc_order}; AUC {auc['two_step_14']:.3f} > {auc['trad_stack_14']:.3f} > "
           f"{auc['weighted_vote_14']:.3f} > {ind_auc:.3f}: {auc_order}; two-step gap {100 * gap:.1f} points "
           f"(>= 2); run {default_run['elapsed']:.0f}s (<= 600s)")


def test_criterion_06_diversity(default_run):
    e = default_run["report"].ensembles
    g2 = e["two_step_14"]["accuracy"]["mean"] - e["two_step_3"]["accuracy"]["mean"]
    gt = e["trad_stack_14"]["accuracy"]["mean"] - e["trad_stack_3"]["accuracy"]["mean"]
    record(6, g2 >= 0.01 and gt >= 0.01,
           f"14 vs 3 models: two-step +{100 * g2:.1f} points, traditional stacking +{100 * gt:.1f} points (>= 1 each)")


def test_criterion_07_glps_only(default_run):
    e = default_run["report"].ensembles
    full, glps = e["two_step_14"]["accuracy"]["mean"], e["two_step_glps_only"]["accuracy"]["mean"]
    record(7, full - glps >= 0.10,
           f"GLPS-only {glps:.3f} vs full {full:.3f}: {100 * (full - glps):.1f} points below (>= 10)")


def test_criterion_08_calibration():
    base = synthgen.default_calibration()
    schema = dataset.DEFAULT_SCHEMA
    glps_sig = {f: 0 for f in schema.blocks["glps"]}
    radial_ns = {f: 0 for f in schema.blocks["gs"]}
    for seed in range(100):
        d = synthgen.generate_cohort(base.replace(seed=seed))
        for r in stats.screen_features(d):
            if r.feature in glps_sig:
                glps_sig[r.feature] += r.significant
            elif r.feature in radial_ns:
                radial_ns[r.feature] += not r.significant
    d = synthgen.generate_cohort(base)
    smoke = d.column("smoke")
    case, control = smoke[d.y == 1].mean(), smoke[d.y == 0].mean()
    smoke_ok = abs(case - 0.525) <= 0.05 and abs(control - 0.28) <= 0.05
    ok = min(glps_sig.values()) >= 90 and min(radial_ns.values()) >= 90 and smoke_ok
    record(8, ok, f"GLPS layers significant in >= {min(glps_sig.values())}/100 seeds, each radial feature "
                  f"non-significant in >= {min(radial_ns.values())}/100 (need 90); smoking {case:.3f} vs "
                  f"{control:.3f} (0.525 / 0.28 within 0.05)")


def test_criterion_09_determinism_and_persistence(tmp_path):
    cfg = harness.ExperimentConfig(replicates=1, seed=17)
    d = harness.load_data(cfg)
    first = harness.run_experiment(cfg, d).to_json()
    second = harness.run_experiment(cfg, d).to_json()
    bundle, p, _ = harness.train_bundle(d, cfg)
    path = tmp_path / "model.json"
    harness.save_model(path, bundle)
    loaded = harness.load_model(path)
    X = bundle.reduce(d)
    probe = X[np.random.default_rng(1).choice(len(X), 100, replace=False)]
    a = ensemble.predict_two_step(bundle.model, probe)
    b = ensemble.predict_two_step(loaded.model, probe)
    same = np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    record(9, first == second and same,
           f"report.json byte-identical across runs: {first == second}; save/load predictions identical on "
           f"100 probes: {same}")


def test_criterion_10_partition_exactness():
    d = synthgen.generate_cohort(synthgen.default_calibration())
    y = d.y
    bad = []
    for seed in range(100):
        p = dataset.make_paper_partition(d, 10, seed)
        p.validate(len(y))
        sizes = (len(p.test), len(p.validation0), len(p.training_pool))
        splits_ok = all((len(tr), len(va)) == (230, 58) for tr, va in p.first_step_splits) and p.K == 10
        strat = [abs(y[p.test].sum() - 64 * 217 / 424),
                 abs(y[p.validation0].sum() - 72 * y[np.r_[p.validation0, p.training_pool]].mean())]
        pool_rate = y[p.training_pool].mean()
        strat += [abs(y[va].sum() - 58 * pool_rate) for _, va in p.first_step_splits]
        if sizes != (64, 72, 288) or not splits_ok or max(strat) > 1:
            bad.append(seed)
    record(10, not bad, f"100 seeds: sizes 64/72/288 with ten (230, 58) splits and class counts within one "
                        f"subject of proportional; failing seeds {bad}")
