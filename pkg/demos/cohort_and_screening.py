"""
A synthetic cohort and univariate screening
===========================================

Generate the default cohort, screen every feature with Welch's t-test
and look at the principal components of the regional strain blocks.
"""

import numpy as np

from twostep import stats, synthgen

# the default calibration: 424 subjects, 217 of them cases
cfg = synthgen.default_calibration()
d = synthgen.generate_cohort(cfg)
print(d.X.shape, d.n_positive)

# screen: cases against controls, feature by feature
results = stats.screen_features(d)
for r in results[:12]:
    print(f"{r.feature:16s} p={r.result.p_value:.2e} {'*' if r.significant else ''}")

# global layer strain separates the classes, radial strain mostly does not
glps = [r for r in results if r.feature.startswith("glps")]
gs = [r for r in results if r.feature.startswith("gs")]
print("glps significant:", sum(r.significant for r in glps), "of", len(glps))
print("radial significant:", sum(r.significant for r in gs), "of", len(gs))

# PCA of each 17-segment block, fitted on all subjects here
models = stats.fit_block_models(d)
for name, m in models.items():
    share = m.eigenvalues / m.eigenvalues.sum()
    print(name, "first components explain", np.round(share[:3], 3))
