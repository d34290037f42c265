import numpy as np
import pytest

from twostep import stats, synthgen
from twostep.errors import NotPositiveDefinite


@pytest.fixture(scope="module")
def cfg():
    return synthgen.default_calibration()


def test_default_cohort_shape_and_class_counts(cfg):
    d = synthgen.generate_cohort(cfg)
    assert d.X.shape == (424, 71) and d.n_positive == 217
    assert len(set(d.subject_ids)) == 424


def test_same_config_same_cohort(cfg):
    assert synthgen.generate_cohort(cfg) == synthgen.generate_cohort(cfg)
    assert synthgen.generate_cohort(cfg) != synthgen.generate_cohort(cfg.replace(seed=cfg.seed + 1))


def test_repaired_correlation_is_a_valid_correlation_matrix(cfg):
    R = synthgen.covariance_for(cfg)
    np.testing.assert_allclose(np.diag(R), 1.0, atol=1e-12)
    assert np.linalg.eigvalsh(R).min() > 0


def test_nearest_correlation_keeps_valid_input():
    A = np.array([[1.0, 0.3], [0.3, 1.0]])
    np.testing.assert_allclose(synthgen.nearest_correlation(A), A, atol=1e-12)


def test_impossible_targets_are_rejected(cfg):
    bc = {k: (dict(v) if isinstance(v, dict) else v) for k, v in cfg.block_correlations.items()}
    bc["pss"] = {"apical": 0.99, "wall": -0.99, "level": 0.99, "other": -0.99}
    with pytest.raises(NotPositiveDefinite):
        cfg.replace(block_correlations=bc, repair_tolerance=0.5)


def test_invalid_rates_are_rejected(cfg):
    with pytest.raises(ValueError):
        cfg.replace(clinical_rates={"smoke": [1.2, 0.3]})
    with pytest.raises(ValueError):
        cfg.replace(positive_count=0)


def test_config_json_round_trip(cfg):
    again = synthgen.GeneratorConfig.from_dict(cfg.to_dict())
    assert again.to_json() == cfg.to_json()


def test_smoking_rates_follow_the_calibration(cfg):
    d = synthgen.generate_cohort(cfg)
    smoke = d.column("smoke")
    assert abs(smoke[d.y == 1].mean() - 0.525) <= 0.05
    assert abs(smoke[d.y == 0].mean() - 0.28) <= 0.05


def test_radial_strain_is_uninformative_and_glps_informative(cfg):
    d = synthgen.generate_cohort(cfg)
    p = {r.feature: r.result.p_value for r in stats.screen_features(d)}
    assert p["glps_epi"] < 0.05
    assert sum(p[f] < 0.05 for f in d.schema.blocks["gs"]) <= 2


def test_marginals_are_in_clinical_units(cfg):
    d = synthgen.generate_cohort(cfg)
    controls = d.y == 0
    assert d.column("tp_05")[controls].mean() == pytest.approx(380, abs=15)
    assert d.column("glps_endo")[controls].mean() == pytest.approx(-21, abs=1.5)
    assert d.column("age").min() >= 18
