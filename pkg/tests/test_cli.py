import json

import pytest

from twostep import cli, dataset

FAST = {"roster": ["logistic_regression", "gaussian_naive_bayes", "decision_tree"], "K": 2}


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.json"
    path.write_text(json.dumps(FAST))
    return str(path)


def test_generate_writes_a_loadable_cohort(tmp_path, capsys):
    assert cli.main(["generate", "--seed", "3", "--out", str(tmp_path)]) == 0
    d = dataset.load_cohort(tmp_path / "cohort.csv")
    assert len(d) == 424 and d.n_positive == 217
    assert "424 subjects" in capsys.readouterr().out


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TWOSTEP_OUT", str(tmp_path / "env"))
    assert cli.main(["generate"]) == 0
    assert (tmp_path / "env" / "cohort.csv").exists()


def test_screen(tmp_path):
    assert cli.main(["screen", "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "screening.csv").read_text().splitlines()) == 65
    assert len((tmp_path / "correlation.csv").read_text().splitlines()) == 65


def test_train_then_score(tmp_path, fast_config, capsys):
    assert cli.main(["generate", "--out", str(tmp_path)]) == 0
    assert cli.main(["train", "--config", fast_config, "--seed", "1", "--out", str(tmp_path)]) == 0
    small = dataset.load_cohort(tmp_path / "cohort.csv").subset(range(3))
    dataset.write_cohort(small, tmp_path / "three.csv")
    capsys.readouterr()
    assert cli.main(["score", "--model", str(tmp_path / "model.json"), "--subjects", str(tmp_path / "three.csv")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "subject_id,label,score,step_0,step_1"
    assert len(lines) == 4


def test_evaluate_writes_reports(tmp_path, fast_config):
    out = tmp_path / "eval"
    assert cli.main(["evaluate", "--config", fast_config, "--replicates", "1", "--out", str(out)]) == 0
    assert len(list(out.glob("roc_*.csv"))) == 7
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["replicates"] == 1 and cfg["output_dir"] == str(out)


def test_exit_codes(tmp_path, fast_config):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"replicates": 0}))
    assert cli.main(["evaluate", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["evaluate", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG
    broken = tmp_path / "broken.csv"
    broken.write_text("subject_id,chd_label\nA,1\n")
    assert cli.main(["screen", "--data", str(broken)]) == cli.EXIT_DATA
    (tmp_path / "model.json").write_text("{}")
    assert cli.main(["score", "--model", str(tmp_path / "model.json"), "--subjects", str(broken)]) == cli.EXIT_DATA


def test_replicate_failures_exit_4(tmp_path, fast_config, monkeypatch):
    from twostep import harness

    def boom(d, cfg, r):
        raise ValueError("injected")

    monkeypatch.setattr(harness, "run_replicate", boom)
    assert cli.main(["evaluate", "--config", fast_config, "--replicates", "2",
                     "--out", str(tmp_path)]) == cli.EXIT_REPLICATES
