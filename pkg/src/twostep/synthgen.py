"""Seeded synthetic cohorts with the strain/clinical layout of the screening study.

Strain features are drawn from a Gaussian with a structured correlation
matrix (AHA level structure inside the segment blocks, layer structure in
the radial and GLPS blocks). Cases get a global mean shift per feature plus
a regional shift on the segments of one ischemic coronary territory, drawn
per subject; clinical binaries are per-class Bernoulli draws and age is a
rounded per-class Gaussian.
"""

import json
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from .dataset import DEFAULT_SCHEMA, LEVELS, Dataset
from .errors import NotPositiveDefinite

# AHA segment numbers (1-based) perfused by each coronary territory
TERRITORIES = {
    "lad": (1, 2, 7, 8, 13, 14, 17),
    "rca": (3, 4, 9, 10, 15),
    "lcx": (5, 6, 11, 12, 16),
}


@dataclass
class GeneratorConfig:
    n: int = 424
    positive_count: int = 217
    seed: int = 0
    # correlation targets; keys documented in build_correlation
    block_correlations: dict = field(default_factory=dict)
    # marginal (mean, sd) of controls per block, in clinical units
    marginals: dict = field(default_factory=dict)
    # standardized case-minus-control mean shift per feature (or per block, key "<block>")
    effect_sizes: dict = field(default_factory=dict)
    # regional shift (standardized) on the segments of the subject's territory, per block
    territory_shift: dict = field(default_factory=dict)
    territory_probs: dict = field(default_factory=lambda: {"lad": 0.5, "rca": 0.3, "lcx": 0.2})
    # fraction of cases with a diffuse (global) deficit; the rest carry a regional one
    diffuse_fraction: float = 1.0
    # share of a regional deficit offset by opposite-signed shifts in remote segments
    remote_compensation: float = 0.0
    severity_range: tuple = (0.5, 1.5)
    signal_multiplier: float = 1.0
    clinical_rates: dict = field(default_factory=dict)  # feature -> [case_rate, control_rate]
    age_moments: dict = field(default_factory=lambda: {"case": [64.39, 9.79], "control": [64.11, 9.52]})
    repair_tolerance: float = 1.0

    def __post_init__(self):
        if not 0 < self.positive_count < self.n:
            raise ValueError("positive_count must be between 0 and n")
        for name, rates in self.clinical_rates.items():
            if len(rates) != 2 or not all(0.0 <= r <= 1.0 for r in rates):
                raise ValueError(f"{name}: rates must be two values in [0, 1]")
        for name, v in {**self.effect_sizes, **self.territory_shift}.items():
            if not np.isfinite(v):
                raise ValueError(f"{name}: effect size must be finite")
        if not 0.0 <= self.diffuse_fraction <= 1.0 or not 0.0 <= self.remote_compensation <= 1.0:
            raise ValueError("diffuse_fraction and remote_compensation must lie in [0, 1]")
        total = sum(self.territory_probs.values())
        if self.territory_probs and abs(total - 1.0) > 1e-9:
            raise ValueError("territory probabilities must sum to 1")
        if self.block_correlations:
            covariance_for(self)  # validates positive definiteness

    def to_dict(self):
        d = asdict(self)
        d["severity_range"] = list(self.severity_range)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "severity_range" in d:
            d["severity_range"] = tuple(d["severity_range"])
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return GeneratorConfig.from_dict(d)


def default_calibration():
    """The calibrated configuration shipped with the package."""
    text = resources.files("twostep.data").joinpath("default_calibration.json").read_text("utf-8")
    return GeneratorConfig.from_dict(json.loads(text))


# ----------------------------------------------------------------------------
# correlation structure

def _level_of(segment):
    for name, segs in LEVELS.items():
        if segment in segs:
            return name
    raise ValueError(segment)


def _segment_block(c):
    """17 x 17 correlation for one segment block from level-relation targets.

    Keys: apical (apex/apical pairs), wall (basal i with mid i+6), level
    (same basal or mid level), other.
    """
    R = np.eye(17)
    for i in range(17):
        for j in range(i + 1, 17):
            li, lj = _level_of(i), _level_of(j)
            if li in ("apical", "apex") and lj in ("apical", "apex"):
                r = c["apical"]
            elif {li, lj} == {"basal", "mid"} and abs(i - j) == 6:
                r = c["wall"]
            elif li == lj:
                r = c["level"]
            else:
                r = c["other"]
            R[i, j] = R[j, i] = r
    return R


def build_correlation(bc):
    """Target 64 x 64 correlation of the strain features, in schema order."""
    schema = DEFAULT_SCHEMA
    offsets, pos = {}, 0
    for b, names in schema.blocks.items():
        offsets[b] = slice(pos, pos + len(names))
        pos += len(names)
    R = np.eye(pos)
    for b in ("pss", "ssr", "tp"):
        R[offsets[b], offsets[b]] = _segment_block(bc[b])
    for a, b in (("pss", "ssr"), ("pss", "tp"), ("ssr", "tp")):
        c = bc[f"{a}_{b}"]
        block = np.full((17, 17), c["other"])
        np.fill_diagonal(block, c["same"])
        R[offsets[a], offsets[b]] = block
        R[offsets[b], offsets[a]] = block.T
    gs = np.full((9, 9), bc["gs"]["across_level"])
    for lv in range(3):
        gs[3 * lv:3 * lv + 3, 3 * lv:3 * lv + 3] = bc["gs"]["same_level"]
    np.fill_diagonal(gs, 1.0)
    R[offsets["gs"], offsets["gs"]] = gs
    gl = np.full((3, 3), bc["glps"]["layers"])
    np.fill_diagonal(gl, 1.0)
    R[offsets["glps"], offsets["glps"]] = gl
    for b, key in (("pss", "glps_pss"), ("gs", "glps_gs")):
        R[offsets["glps"], offsets[b]] = bc[key]
        R[offsets[b], offsets["glps"]] = bc[key]
    R[offsets["psd"], offsets["tp"]] = bc["psd_tp"]
    R[offsets["tp"], offsets["psd"]] = bc["psd_tp"]
    return R


def nearest_correlation(R, floor=1e-6):
    """Clip eigenvalues at `floor` and rescale back to unit diagonal."""
    vals, vecs = np.linalg.eigh(0.5 * (R + R.T))
    A = (vecs * np.maximum(vals, floor)) @ vecs.T
    d = np.sqrt(np.diag(A))
    A = A / np.outer(d, d)
    return 0.5 * (A + A.T)


def covariance_for(cfg):
    target = build_correlation(cfg.block_correlations)
    repaired = nearest_correlation(target)
    if np.linalg.norm(repaired - target) > cfg.repair_tolerance:
        raise NotPositiveDefinite(
            f"correlation targets need a repair of {np.linalg.norm(repaired - target):.3f} > tolerance")
    try:
        np.linalg.cholesky(repaired)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("repaired correlation is still not positive definite") from None
    return repaired


# ----------------------------------------------------------------------------
# sampling

def _shift_vector(cfg):
    """Global standardized case shift for each of the 64 strain features."""
    schema = DEFAULT_SCHEMA
    out = []
    for b, names in schema.blocks.items():
        for name in names:
            out.append(cfg.effect_sizes.get(name, cfg.effect_sizes.get(b, 0.0)))
    return np.array(out, dtype=float)


def _territory_matrix(cfg):
    """(n_territories, 64) standardized regional shifts."""
    schema = DEFAULT_SCHEMA
    rows = []
    for t in cfg.territory_probs:
        segs = {s - 1 for s in TERRITORIES[t]}
        row = []
        for b, names in schema.blocks.items():
            shift = cfg.territory_shift.get(b, 0.0)
            if b not in ("pss", "ssr", "tp"):
                row += [0.0] * len(names)
                continue
            remote = -cfg.remote_compensation * shift * len(segs) / (17 - len(segs))
            row += [shift if i in segs else remote for i in range(17)]
        rows.append(row)
    return np.array(rows, dtype=float)


def generate_cohort(cfg):
    """Draw one cohort; identical configs (including seed) give identical cohorts."""
    schema = DEFAULT_SCHEMA
    rng = np.random.default_rng(cfg.seed)
    n, n_pos = cfg.n, cfg.positive_count
    y = np.r_[np.ones(n_pos, dtype=np.int64), np.zeros(n - n_pos, dtype=np.int64)]

    R = covariance_for(cfg)
    L = np.linalg.cholesky(R)
    Z = rng.standard_normal((n, R.shape[0])) @ L.T

    case = y == 1
    # every case is diffuse or regional; all draws happen so the stream does not depend on the mix
    diffuse = rng.random(n_pos) < cfg.diffuse_fraction
    shift = np.zeros((n_pos, R.shape[0]))
    shift[diffuse] = _shift_vector(cfg)
    if cfg.territory_probs:
        names = list(cfg.territory_probs)
        probs = np.array([cfg.territory_probs[t] for t in names])
        which = rng.choice(len(names), size=n_pos, p=probs)
        severity = rng.uniform(*cfg.severity_range, size=n_pos)
        regional = severity[:, None] * _territory_matrix(cfg)[which]
        shift[~diffuse] = regional[~diffuse]
    Z[case] += cfg.signal_multiplier * shift

    strain = np.empty_like(Z)
    pos = 0
    for b, names in schema.blocks.items():
        mean, sd = cfg.marginals.get(b, (0.0, 1.0))
        if isinstance(mean, (list, tuple)):
            mean = np.asarray(mean, dtype=float)
        strain[:, pos:pos + len(names)] = mean + sd * Z[:, pos:pos + len(names)]
        pos += len(names)

    clinical = np.zeros((n, len(schema.categorical_features)))
    for j, name in enumerate(schema.categorical_features):
        if name == "age":
            mc, sc = cfg.age_moments["case"]
            m0, s0 = cfg.age_moments["control"]
            age = np.where(case, rng.normal(mc, sc, n), rng.normal(m0, s0, n))
            clinical[:, j] = np.clip(np.rint(age), 18, None)
        else:
            rc, r0 = cfg.clinical_rates.get(name, (0.5, 0.5))
            clinical[:, j] = (rng.random(n) < np.where(case, rc, r0)).astype(float)

    X = np.hstack([strain, clinical])
    order = rng.permutation(n)
    ids = tuple(f"S{i + 1:04d}" for i in range(n))
    return Dataset(schema, X[order], y[order], ids)
