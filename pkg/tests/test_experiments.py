import csv
import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from sdenet import cli, experiments
from sdenet.errors import ConfigError, UndefinedMetricError
from sdenet.metrics import auroc, from_scores

SCHEMA = json.loads(
    (Path(experiments.__file__).parent / "schemas" / "results.schema.json").read_text())

TINY_OOD = {
    "seeds": [0],
    "dataset": {"n_per_class": 100},
    "train": {"epochs": 4},
}


def _validate(out_dir):
    payload = json.loads((Path(out_dir) / "results.json").read_text())
    jsonschema.validate(payload, SCHEMA)
    return payload


def test_effective_config_merging():
    config = experiments.effective_config("ood", {"train": {"epochs": 7}},
                                          {"seeds": [1, 2]})
    assert config["train"]["epochs"] == 7
    assert config["train"]["lr_drift"] == 0.02  # default survives partial override
    assert config["seeds"] == [1, 2]
    assert config["experiment"] == "ood"
    with pytest.raises(ConfigError):
        experiments.effective_config("nonsense")
    with pytest.raises(ConfigError):
        experiments.effective_config("ood", overrides={"seeds": []})


def test_output_dir_env_override(monkeypatch, tmp_path):
    monkeypatch.setenv(experiments.OUTPUT_DIR_ENV, str(tmp_path / "env_dir"))
    config = experiments.effective_config("ood")
    assert config["output_dir"] == str(tmp_path / "env_dir")


def test_load_config_file_toml_and_json(tmp_path):
    toml_path = tmp_path / "c.toml"
    toml_path.write_text('[train]\nepochs = 3\n')
    assert experiments.load_config_file(toml_path) == {"train": {"epochs": 3}}
    json_path = tmp_path / "c.json"
    json_path.write_text('{"train": {"epochs": 4}}')
    assert experiments.load_config_file(json_path) == {"train": {"epochs": 4}}
    bad = tmp_path / "bad.toml"
    bad.write_text("= nonsense")
    with pytest.raises(ConfigError):
        experiments.load_config_file(bad)
    with pytest.raises(ConfigError):
        experiments.load_config_file(tmp_path / "missing.toml")


def test_ood_experiment_outputs(tmp_path):
    config = experiments.effective_config(
        "ood", TINY_OOD, {"output_dir": str(tmp_path / "run")})
    payload = experiments.run_ood_experiment(config)
    saved = _validate(tmp_path / "run")
    assert saved["summary"] == payload["summary"]
    keys = set(payload["per_seed"][0]["reports"])
    assert keys == {"sde_net/epistemic", "sde_net/max_prob", "threshold/max_prob"}
    # single seed: every std is exactly zero
    for stats in payload["summary"]["sde_net/epistemic"].values():
        assert stats["std"] == 0.0
    for name in ("raw_scores.csv", "table.csv", "trainlog_seed0.csv",
                 "effective_config.json"):
        assert (tmp_path / "run" / name).exists()
    assert (tmp_path / "run" / "model_seed0" / "params.json").exists()


def test_ood_baseline_rows_follow_config(tmp_path):
    config = experiments.effective_config(
        "ood", TINY_OOD,
        {"output_dir": str(tmp_path / "nothr"),
         "baselines": {"threshold": False, "ensemble_size": 0}})
    payload = experiments.run_ood_experiment(config)
    assert set(payload["per_seed"][0]["reports"]) == {"sde_net/epistemic",
                                                      "sde_net/max_prob"}


def test_ood_ensemble_comparator(tmp_path):
    config = experiments.effective_config(
        "ood", TINY_OOD,
        {"output_dir": str(tmp_path / "ens"),
         "baselines": {"threshold": False, "ensemble_size": 2}})
    payload = experiments.run_ood_experiment(config)
    assert "deep_ensemble/max_prob" in payload["per_seed"][0]["reports"]


def test_ood_alternative_sources(tmp_path):
    config = experiments.effective_config(
        "ood", TINY_OOD,
        {"output_dir": str(tmp_path / "gauss"),
         "ood": {"source": "gaussian", "train_source": "gaussian",
                 "noise_variance": 4.0}})
    payload = experiments.run_ood_experiment(config)
    assert "sde_net/epistemic" in payload["per_seed"][0]["reports"]
    config_bad = experiments.effective_config(
        "ood", TINY_OOD, {"output_dir": str(tmp_path / "bad"),
                          "ood": {"source": "svhn"}})
    with pytest.raises(ConfigError, match="ood source"):
        experiments.run_ood_experiment(config_bad)


def test_ood_experiment_byte_deterministic(tmp_path):
    blobs = []
    for name in ("a", "b"):
        config = experiments.effective_config(
            "ood", TINY_OOD, {"output_dir": str(tmp_path / name)})
        experiments.run_ood_experiment(config)
        blobs.append(((tmp_path / name / "results.json").read_bytes(),
                      (tmp_path / name / "raw_scores.csv").read_bytes()))
    # results.json embeds the config (differing output_dir), so compare
    # everything except that one key
    a = json.loads(blobs[0][0]); b = json.loads(blobs[1][0])
    a["config"].pop("output_dir"); b["config"].pop("output_dir")
    assert a == b
    assert blobs[0][1] == blobs[1][1]


def test_table_percentages_match_raw_scores(tmp_path):
    config = experiments.effective_config(
        "ood", TINY_OOD, {"output_dir": str(tmp_path / "run")})
    experiments.run_ood_experiment(config)
    with (tmp_path / "run" / "raw_scores.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    scores = {}
    for row in rows:
        key = (row["model"], row["mode"])
        scores.setdefault(key, {"pos": [], "neg": []})[
            "pos" if row["label"] == "1" else "neg"].append(float(row["score"]))
    with (tmp_path / "run" / "table.csv").open() as fh:
        table = {(r["detector"], r["metric"]): float(r["mean_percent"])
                 for r in csv.DictReader(fh)}
    for (model, mode), both in scores.items():
        recomputed = auroc(from_scores(both["pos"], both["neg"]))
        assert table[(f"{model}/{mode}", "auroc")] == round(100.0 * recomputed, 1)


def test_misclassification_experiment(tmp_path):
    config = experiments.effective_config(
        "misclassification",
        {"seeds": [0], "dataset": {"n_per_class": 200}, "train": {"epochs": 6}},
        {"output_dir": str(tmp_path / "mis")})
    payload = experiments.run_misclassification_experiment(config)
    _validate(tmp_path / "mis")
    report = payload["per_seed"][0]["reports"]["sde_net/max_prob"]
    assert report["aupr_succ"] == report["aupr_in"]
    assert report["aupr_err"] == report["aupr_out"]
    assert report["ece"] is not None and 0.0 <= report["ece"] <= 1.0
    header = (tmp_path / "mis" / "raw_scores.csv").read_text().splitlines()[0]
    assert header == "model,mode,seed,sample_id,label,score,aleatoric,epistemic,predicted"


def test_misclassification_degenerate_raises(tmp_path):
    config = experiments.effective_config(
        "misclassification",
        {"seeds": [0], "train": {"epochs": 25},
         "dataset": {"n_per_class": 60, "means": [[-8.0, 0.0], [8.0, 0.0]]}},
        {"output_dir": str(tmp_path / "deg")})
    with pytest.raises(UndefinedMetricError, match="misclassified"):
        experiments.run_misclassification_experiment(config)


def test_attack_experiment(tmp_path):
    config = experiments.effective_config(
        "attack",
        {"seeds": [0], "dataset": {"n_per_class": 100}, "train": {"epochs": 4},
         "attack": {"epsilon_grid": [0.0, 0.5], "n_eval": 40}},
        {"output_dir": str(tmp_path / "atk")})
    payload = experiments.run_attack_experiment(config)
    _validate(tmp_path / "atk")
    for mode, curve in payload["summary"].items():
        assert [point["epsilon"] for point in curve] == [0.0, 0.5]
        for point in curve:
            assert 0.0 <= point["auroc"]["mean"] <= 1.0
    header = (tmp_path / "atk" / "raw_scores.csv").read_text().splitlines()[0]
    assert header == "mode,seed,epsilon,sample_id,label,score"


def test_active_learning_experiment_files(tmp_path):
    config = experiments.effective_config(
        "active_learning",
        {"seeds": [0],
         "dataset": {"pool_size": 200, "test_size": 80, "n_initial": 30},
         "train": {"epochs": 8, "batch_size": 30},
         "active": {"rounds": 2, "acquisition_batch": 20}},
        {"output_dir": str(tmp_path / "al")})
    payload = experiments.run_active_learning(config)
    _validate(tmp_path / "al")
    arms = payload["per_seed"][0]["arms"]
    assert set(arms) == {"weighted", "random"}
    assert arms["weighted"]["labeled_counts"] == [30, 50, 70]
    with (tmp_path / "al" / "raw_scores.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert {r["arm"] for r in rows} == {"weighted", "random"}
    assert len(rows) == 2 * 3  # two arms, rounds+1 rows each


def test_visualization_grid_contract(tmp_path):
    config = experiments.effective_config(
        "visualize",
        {"seeds": [0], "dataset": {"n_per_class": 150}, "train": {"epochs": 30},
         "visualize": {"resolution": 12, "bounds": [[-6.0, 6.0], [-6.0, 6.0]]}},
        {"output_dir": str(tmp_path / "viz")})
    payload = experiments.run_visualization(config)
    _validate(tmp_path / "viz")
    assert payload["summary"]["grid_points"] == 144
    lines = (tmp_path / "viz" / "heatmap.csv").read_text().splitlines()
    assert lines[0] == "x,y,g,epistemic"
    assert len(lines) == 145
    # after training, diffusion is smaller near the data than far away
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    dist = np.minimum(np.hypot(rows[:, 0] + 2.0, rows[:, 1]),
                      np.hypot(rows[:, 0] - 2.0, rows[:, 1]))
    assert rows[dist <= 2.0, 2].mean() < rows[dist > 4.0, 2].mean()


def test_visualization_rejects_non_2d(tmp_path):
    config = experiments.effective_config(
        "visualize",
        {"seeds": [0],
         "dataset": {"means": [[-2.0, 0.0, 0.0], [2.0, 0.0, 0.0]]}},
        {"output_dir": str(tmp_path / "viz3")})
    with pytest.raises(ConfigError, match="2-D"):
        experiments.run_visualization(config)


# -- CLI ------------------------------------------------------------------------

def test_cli_selfcheck_passes(capsys):
    assert cli.main(["selfcheck", "--trials", "25"]) == 0
    out = capsys.readouterr().out
    assert "selfcheck passed" in out


def test_cli_runs_ood(tmp_path, capsys):
    rc = cli.main(["eval-ood", "--seeds", "0",
                   "--output-dir", str(tmp_path / "cli_run"),
                   "--set", "train.epochs=3",
                   "--set", "dataset.n_per_class=80"])
    assert rc == 0
    assert (tmp_path / "cli_run" / "results.json").exists()


def test_cli_config_file_and_set_precedence(tmp_path):
    config_file = tmp_path / "exp.toml"
    config_file.write_text(
        "seeds = [0]\n[train]\nepochs = 3\n[dataset]\nn_per_class = 60\n")
    rc = cli.main(["train", "-c", str(config_file),
                   "--output-dir", str(tmp_path / "out"),
                   "--set", "train.epochs=2"])
    assert rc == 0
    effective = json.loads((tmp_path / "out" / "effective_config.json").read_text())
    assert effective["train"]["epochs"] == 2
    assert effective["dataset"]["n_per_class"] == 60


def test_cli_exit_codes(tmp_path):
    # config error: missing file
    assert cli.main(["eval-ood", "-c", str(tmp_path / "none.toml")]) == 2
    # numeric error: absurd learning rate
    rc = cli.main(["train", "--seeds", "0",
                   "--output-dir", str(tmp_path / "boom"),
                   "--set", "train.lr_drift=1e9",
                   "--set", "train.epochs=2",
                   "--set", "dataset.n_per_class=60"])
    assert rc == 3
    # undefined metric: perfectly separable misclassification split
    rc = cli.main(["eval-misclass", "--seeds", "0",
                   "--output-dir", str(tmp_path / "deg"),
                   "--set", "train.epochs=25",
                   "--set", "dataset.n_per_class=60",
                   "--set", 'dataset.means=[[-8.0,0.0],[8.0,0.0]]'])
    assert rc == 4
