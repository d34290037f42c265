"""Two-step stacking ensembles for screening coronary heart disease from strain features."""

from .dataset import DEFAULT_SCHEMA, Dataset, FeatureSchema, load_cohort, make_paper_partition
from .ensemble import fit_two_step, majority_vote, predict_two_step, weighted_vote
from .harness import ExperimentConfig, run_experiment, score_subject
from .synthgen import GeneratorConfig, default_calibration, generate_cohort

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_SCHEMA", "Dataset", "FeatureSchema", "load_cohort", "make_paper_partition",
    "fit_two_step", "majority_vote", "predict_two_step", "weighted_vote",
    "ExperimentConfig", "run_experiment", "score_subject",
    "GeneratorConfig", "default_calibration", "generate_cohort",
]
