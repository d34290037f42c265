"""Command line entry point: generate, screen, train, evaluate, score.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 too many
failed replicates or a failed leakage audit.
"""

import argparse
import json
import logging
import os
import sys

from . import dataset, harness, stats, synthgen
from .errors import ConfigError, CorruptManifest, DataError, NotPositiveDefinite, VersionMismatch

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_REPLICATES = 4


def _out_dir(args, default):
    """--out wins, then the environment override, then the default."""
    return args.out or os.environ.get(harness.OUTPUT_ENV) or default


def _experiment_config(args):
    cfg = harness.ExperimentConfig.from_json(args.config) if args.config else harness.ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "replicates", None) is not None:
        changes["replicates"] = args.replicates
    if getattr(args, "data", None):
        changes["data_path"] = args.data
    if changes:
        cfg = harness.ExperimentConfig.from_dict({**cfg.to_dict(), **changes})
    return cfg


def _generator_config(args):
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        # an experiment config carries its generator settings under "generator"
        if "generator" in doc or "replicates" in doc:
            gen = harness.ExperimentConfig.from_dict(doc).generator_config()
        else:
            try:
                gen = synthgen.GeneratorConfig.from_dict({**synthgen.default_calibration().to_dict(), **doc})
            except TypeError as exc:
                raise ConfigError(str(exc)) from None
    else:
        gen = synthgen.default_calibration()
    if args.seed is not None:
        gen = gen.replace(seed=args.seed)
    return gen


def cmd_generate(args):
    try:
        gen = _generator_config(args)
    except (ValueError, NotPositiveDefinite) as exc:
        raise ConfigError(str(exc)) from None
    d = synthgen.generate_cohort(gen)
    out = _out_dir(args, ".")
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "cohort.csv")
    dataset.write_cohort(d, path)
    dataset.atomic_write(os.path.join(out, "generator_config.json"), gen.to_json() + "\n")
    print(f"wrote {path}: {len(d.y)} subjects, {d.n_positive} positive")
    return 0


def cmd_screen(args):
    cfg = _experiment_config(args)
    d = harness.load_data(cfg)
    out = _out_dir(args, ".")
    os.makedirs(out, exist_ok=True)
    results = stats.screen_features(d)
    dataset.atomic_write(os.path.join(out, "screening.csv"), stats.screening_to_csv(results))
    names = d.schema.numeric_features
    dataset.atomic_write(os.path.join(out, "correlation.csv"),
                         stats.correlation_to_csv(stats.correlation_matrix(d), names))
    sig = sum(r.significant for r in results)
    print(f"{sig} of {len(results)} features significant at 0.05; wrote screening.csv and correlation.csv to {out}")
    return 0


def cmd_train(args):
    cfg = _experiment_config(args)
    d = harness.load_data(cfg)
    bundle, _, scores = harness.train_bundle(d, cfg)
    out = _out_dir(args, ".")
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "model.json")
    harness.save_model(path, bundle)
    dataset.atomic_write(os.path.join(out, "config.json"), json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}; held-out test accuracy {scores['accuracy']:.3f}, AUC {scores['auc']:.3f}")
    return 0


def cmd_evaluate(args):
    cfg = _experiment_config(args)
    out = _out_dir(args, cfg.output_dir or "results")
    cfg = harness.ExperimentConfig.from_dict({**cfg.to_dict(), "output_dir": out, "workers": args.workers or cfg.workers})
    report = harness.run_experiment(cfg)
    print(harness.tables_text(report), end="")
    print(f"reports written to {out}")
    if not report.ok:
        print(f"{len(report.failures)} failed replicates, {report.leakage_violations} leakage violations",
              file=sys.stderr)
        return EXIT_REPLICATES
    return 0


def cmd_score(args):
    bundle = harness.load_model(args.model)
    d = dataset.load_cohort(args.subjects, dataset.DEFAULT_SCHEMA)
    print("subject_id,label,score," + ",".join(f"step_{k}" for k in range(bundle.model.K)))
    for i, sid in enumerate(d.subject_ids):
        row = dict(zip(d.schema.columns, d.X[i]))
        label, score, steps = harness.score_subject(bundle, row)
        print(f"{sid},{label},{score:.6f}," + ",".join(f"{s:.6f}" for s in steps))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="twostep", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, replicates=False):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help=f"output directory (env {harness.OUTPUT_ENV} also works)")
        if replicates:
            sp.add_argument("--replicates", type=int)

    g = sub.add_parser("generate", help="write a synthetic cohort CSV")
    common(g)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("screen", help="t-test screening and correlation matrix")
    common(s)
    s.add_argument("--data", help="cohort CSV (default: synthetic cohort)")
    s.set_defaults(func=cmd_screen)

    t = sub.add_parser("train", help="fit and save one two-step model")
    common(t)
    t.add_argument("--data", help="cohort CSV (default: synthetic cohort)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="replicated comparison of all ensembles")
    common(e, replicates=True)
    e.add_argument("--data", help="cohort CSV (default: synthetic cohort)")
    e.add_argument("--workers", type=int)
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("score", help="score subjects with a saved model")
    c.add_argument("--model", required=True)
    c.add_argument("--subjects", required=True, help="CSV in cohort format (label column may be 0)")
    c.set_defaults(func=cmd_score)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CorruptManifest, VersionMismatch, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
