"""
A small repeated evaluation
===========================

Run a few replicates of the full protocol and print the comparison table.
The default run uses 50 replicates; five keep this demo under a minute.
"""

import tempfile

from twostep import harness

cfg = harness.ExperimentConfig(replicates=5, seed=1)
report = harness.run_experiment(cfg)
print(harness.tables_text(report))

# per-replicate detail: which learners survived exclusion
for r in report.replicates:
    print(r["replicate"], "kept", len(r["kept"]), "top3", r["top3"])

out = tempfile.mkdtemp()
harness.emit_reports(report, out)
print("reports written to", out)
