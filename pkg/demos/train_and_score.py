"""
Train one two-step model and score a subject
============================================

Partition the cohort, fit the first-step stacks and the second combiner,
save the bundle and score a held-out subject from the saved file.
"""

import tempfile
from pathlib import Path

from twostep import harness

cfg = harness.ExperimentConfig(seed=3)
d = harness.load_data(cfg)

# PCA and tuning see only the training pool; the test rows stay untouched
bundle, partition, metrics = harness.train_bundle(d, cfg)
print("test subjects:", len(partition.test))
print({k: round(v, 3) for k, v in metrics.items()})

path = Path(tempfile.mkdtemp()) / "model.json"
harness.save_model(path, bundle)

# one subject as a plain column -> value mapping
i = int(partition.test[0])
row = dict(zip(d.schema.columns, d.X[i]))
label, score, steps = harness.score_subject(path, row)
print("truth", int(d.y[i]), "label", label, "score", round(score, 3))
print("first-step scores", [round(s, 3) for s in steps])
