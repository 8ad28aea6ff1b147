"""Experiment orchestration: config handling, seed repetition, result files.

Every experiment is a pure function of its effective config; outputs are
written with sorted keys and repr-formatted floats so reruns are
byte-identical. Files per run: ``results.json`` (schema-versioned),
``raw_scores.csv``, ``table.csv`` (percent, one decimal),
``trainlog_seed*.csv``, per-seed model checkpoints, and
``effective_config.json``.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from . import uncertainty
from .active_learning import PoolState, active_learning_experiment
from .adversarial import AttackConfig, adversarial_detection_experiment
from .baselines import DeepEnsemble, threshold_scores, train_threshold_baseline
from .data import (Dataset, Normalizer, gen_curve_sample, gen_gapped_regression,
                   gen_two_gaussians, grid_probe)
from .errors import ConfigError, UndefinedMetricError
from .metrics import detection_report, ece, from_scores
from .model import CLASSIFICATION, REGRESSION, SdeNet
from .rng import substream
from .tensor import Tensor
from .training import TrainConfig, ood_perturb, train
from .uncertainty import EPISTEMIC, MAX_PROB, batch_aleatoric, batch_detection, batch_epistemic

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "SDENET_OUTPUT_DIR"

BLOB_MEANS_10D = [[-2.0] + [0.0] * 9, [2.0] + [0.0] * 9]

DEFAULTS: dict[str, dict] = {
    "common": {
        "seeds": [0, 1, 2, 3, 4],
        "output_dir": "results",
        "n_paths_test": 10,
    },
    "train": {
        "task": CLASSIFICATION,
        "dataset": {"kind": "two_gaussians", "n_per_class": 600,
                    "means": [[-2.0, 0.0], [2.0, 0.0]], "covariance": 1.0},
        "model": {"state_dim": 16, "drift_hidden": 50, "diffusion_hidden": 100,
                  "sigma_max_train": 1.0, "sigma_max_test": 10.0},
        "train": {"epochs": 40, "batch_size": 128, "lr_drift": 0.02,
                  "lr_diffusion": 0.05},
    },
    "ood": {
        "task": CLASSIFICATION,
        "dataset": {"kind": "two_gaussians", "n_per_class": 600,
                    "means": BLOB_MEANS_10D, "covariance": 1.0},
        "model": {"state_dim": 16, "sigma_max_train": 1.0, "sigma_max_test": 10.0},
        "train": {"epochs": 40, "batch_size": 128, "lr_drift": 0.02,
                  "lr_diffusion": 0.05, "ood_noise_variance": 4.0},
        "ood": {"source": "perturb", "noise_variance": 4.0},
        "baselines": {"threshold": True, "ensemble_size": 0},
    },
    "misclassification": {
        "task": CLASSIFICATION,
        "dataset": {"kind": "two_gaussians", "n_per_class": 600,
                    "means": [[-1.0, 0.0], [1.0, 0.0]], "covariance": 1.0},
        "model": {"state_dim": 16, "sigma_max_train": 1.0, "sigma_max_test": 10.0},
        "train": {"epochs": 40, "batch_size": 128, "lr_drift": 0.02,
                  "lr_diffusion": 0.05},
        "ece_bins": 15,
    },
    "attack": {
        "task": CLASSIFICATION,
        "dataset": {"kind": "two_gaussians", "n_per_class": 600,
                    "means": [[-2.0, 0.0], [2.0, 0.0]], "covariance": 1.0},
        "model": {"state_dim": 16, "sigma_max_train": 1.0, "sigma_max_test": 10.0},
        "train": {"epochs": 40, "batch_size": 128, "lr_drift": 0.02,
                  "lr_diffusion": 0.05},
        "attack": {"kind": "fgsm", "epsilon_grid": [0.0, 0.05, 0.1, 0.2, 0.5, 1.0],
                   "iterations": 10, "step_size": None, "n_eval": 150,
                   "score_modes": [MAX_PROB, EPISTEMIC]},
    },
    "active_learning": {
        "task": REGRESSION,
        "dataset": {"kind": "gapped_regression", "n_initial": 50, "pool_size": 2000,
                    "test_size": 1000, "gap": [-2.0, 2.0], "domain": [-6.0, 6.0],
                    "noise_sigma": 0.1},
        "model": {"state_dim": 16, "sigma_max_train": 0.5, "sigma_max_test": 0.5},
        "train": {"epochs": 100, "batch_size": 50, "lr_drift": 0.001,
                  "lr_diffusion": 0.05, "ood_noise_variance": 0.1,
                  "val_fraction": 0.0},
        "active": {"rounds": 5, "acquisition_batch": 50, "warm_start": True,
                   "run_random_control": True},
    },
    "visualize": {
        "task": CLASSIFICATION,
        "dataset": {"kind": "two_gaussians", "n_per_class": 600,
                    "means": [[-2.0, 0.0], [2.0, 0.0]], "covariance": 1.0},
        "model": {"state_dim": 16, "sigma_max_train": 1.0, "sigma_max_test": 10.0},
        "train": {"epochs": 40, "batch_size": 128, "lr_drift": 0.02,
                  "lr_diffusion": 0.05},
        "visualize": {"bounds": [[-6.0, 6.0], [-6.0, 6.0]], "resolution": 50},
    },
}


# -- config plumbing ---------------------------------------------------------

def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix == ".json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None


def effective_config(experiment: str, file_config: dict | None = None,
                     overrides: dict | None = None) -> dict:
    if experiment not in DEFAULTS or experiment == "common":
        raise ConfigError(f"unknown experiment {experiment!r}")
    config = _deep_merge(DEFAULTS["common"], DEFAULTS[experiment])
    if file_config:
        config = _deep_merge(config, file_config)
    if overrides:
        config = _deep_merge(config, overrides)
    config["experiment"] = experiment
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir:
        config["output_dir"] = env_dir
    if not config.get("seeds"):
        raise ConfigError("seeds must be a nonempty list")
    return config


# -- shared pieces -----------------------------------------------------------

def _build_classification_data(config: dict, seed: int):
    spec = config["dataset"]
    if spec["kind"] != "two_gaussians":
        raise ConfigError(f"unsupported classification dataset {spec['kind']!r}")
    ds = gen_two_gaussians(spec["n_per_class"], means=spec["means"],
                           covariance=spec.get("covariance", 1.0), seed=seed)
    return ds


def _model_for(config: dict, input_dim: int, n_classes, seed: int) -> SdeNet:
    return SdeNet(config["task"], input_dim=input_dim, n_classes=n_classes,
                  init_seed=seed, **config.get("model", {}))


def _train_config(config: dict, seed: int) -> TrainConfig:
    kwargs = dict(config.get("train", {}))
    decay = kwargs.pop("drift_lr_decay_epochs", None)
    if decay is not None:
        kwargs["drift_lr_decay_epochs"] = tuple(decay)
    decay = kwargs.pop("diffusion_lr_decay_epochs", None)
    if decay is not None:
        kwargs["diffusion_lr_decay_epochs"] = tuple(decay)
    return TrainConfig(seed=seed, **kwargs)


def _prepare_output(config: dict) -> Path:
    out = Path(config["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.json").write_text(json.dumps(config, sort_keys=True))
    return out


def _write_results(out: Path, payload: dict) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    (out / "results.json").write_text(json.dumps(payload, sort_keys=True))


def _write_rows(path: Path, header: list[str], rows) -> None:
    def cell(v):
        if isinstance(v, float):        # includes np.float64
            return repr(float(v))
        if isinstance(v, np.integer):
            return int(v)
        return v

    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell(v) for v in row])


def _mean_std(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


def _summarize(per_seed_reports: list[dict]) -> dict:
    summary = {}
    for key in per_seed_reports[0]:
        vals = [r[key] for r in per_seed_reports if r[key] is not None]
        if vals:
            summary[key] = _mean_std(vals)
    return summary


# -- experiments -------------------------------------------------------------

def run_train(config: dict) -> dict:
    out = _prepare_output(config)
    per_seed = []
    for seed in config["seeds"]:
        ds = _build_classification_data(config, seed)
        x_train, y_train = ds.subset("train")
        model = _model_for(config, ds.x.shape[1], int(ds.y.max()) + 1, seed)
        log = train(model, x_train, y_train, _train_config(config, seed),
                    checkpoint_dir=out / f"model_seed{seed}")
        log.write_csv(out / f"trainlog_seed{seed}.csv")
        per_seed.append({"seed": seed, "final_loss": log.task_loss[-1],
                         "final_val_metric": log.val_metric[-1]})
    payload = {"experiment": "train", "task": config["task"],
               "seeds": list(config["seeds"]), "config": config,
               "per_seed": per_seed,
               "summary": _summarize([{k: r[k] for k in ("final_loss", "final_val_metric")}
                                      for r in per_seed])}
    _write_results(out, payload)
    return payload


def _ood_inputs(kind: str, x_ref: np.ndarray, variance: float,
                rng: np.random.Generator) -> np.ndarray:
    if kind == "perturb":
        return ood_perturb(x_ref, variance, rng)
    if kind == "gaussian":
        return rng.standard_normal(x_ref.shape)
    raise ConfigError(f"unsupported ood source {kind!r}")


def _ood_scores_for_seed(config: dict, seed: int, out: Path):
    ds = _build_classification_data(config, seed)
    x_train, y_train = ds.subset("train")
    x_test, _ = ds.subset("test")
    n_classes = int(ds.y.max()) + 1
    model = _model_for(config, ds.x.shape[1], n_classes, seed)

    ood_spec = config["ood"]
    train_source = ood_spec.get("train_source", "perturb")
    x_train_ood = None
    if train_source != "perturb":
        x_train_ood = _ood_inputs(train_source, x_train,
                                  ood_spec["noise_variance"], substream(seed, 66))
    log = train(model, x_train, y_train, _train_config(config, seed),
                checkpoint_dir=out / f"model_seed{seed}", x_ood=x_train_ood)
    log.write_csv(out / f"trainlog_seed{seed}.csv")

    x_ood = _ood_inputs(ood_spec["source"], x_test, ood_spec["noise_variance"],
                        substream(seed, 60))

    n_paths = config["n_paths_test"]
    pb_id = model.forward_paths(x_test, n_paths, seed=substream(seed, 61).integers(2 ** 31))
    pb_ood = model.forward_paths(x_ood, n_paths, seed=substream(seed, 62).integers(2 ** 31))

    g_id = model.diffusion_value(model.initial_state(Tensor(x_test)),
                                 model.sigma_max_train).data.mean()
    g_ood = model.diffusion_value(model.initial_state(Tensor(x_ood)),
                                  model.sigma_max_train).data.mean()

    scores = {}
    scores[("sde_net", EPISTEMIC)] = (-batch_epistemic(pb_id), -batch_epistemic(pb_ood))
    scores[("sde_net", MAX_PROB)] = (batch_detection(pb_id, MAX_PROB),
                                     batch_detection(pb_ood, MAX_PROB))
    baselines = config.get("baselines", {})
    if baselines.get("threshold", True):
        thr_model, _ = train_threshold_baseline(
            x_train, y_train, config["task"], n_classes,
            _train_config(config, seed), init_seed=seed, **config.get("model", {}))
        scores[("threshold", MAX_PROB)] = (threshold_scores(thr_model, x_test),
                                           threshold_scores(thr_model, x_ood))
    size = int(baselines.get("ensemble_size", 0))
    if size >= 2:
        ensemble = DeepEnsemble.fit(x_train, y_train, config["task"], n_classes,
                                    _train_config(config, seed), size=size,
                                    init_seed=seed, **config.get("model", {}))
        scores[("deep_ensemble", MAX_PROB)] = (ensemble.scores(x_test),
                                               ensemble.scores(x_ood))
    return scores, float(g_id), float(g_ood)


def run_ood_experiment(config: dict) -> dict:
    out = _prepare_output(config)
    raw_rows = []
    per_seed = []
    report_keys = None
    for seed in config["seeds"]:
        scores, g_id, g_ood = _ood_scores_for_seed(config, seed, out)
        entry = {"seed": seed, "g_id": g_id, "g_ood": g_ood,
                 "g_margin": g_ood - g_id, "reports": {}}
        for (model_name, mode), (pos, neg) in scores.items():
            report = detection_report(from_scores(pos, neg))
            entry["reports"][f"{model_name}/{mode}"] = report.to_dict()
            for i, s in enumerate(pos):
                raw_rows.append([model_name, mode, seed, i, 1, float(s)])
            for i, s in enumerate(neg):
                raw_rows.append([model_name, mode, seed, len(pos) + i, 0, float(s)])
        per_seed.append(entry)
        report_keys = sorted(entry["reports"])

    summary = {}
    for key in report_keys:
        metric_names = per_seed[0]["reports"][key]
        summary[key] = {m: _mean_std([e["reports"][key][m] for e in per_seed])
                        for m in metric_names if metric_names[m] is not None}
    summary["g_margin"] = _mean_std([e["g_margin"] for e in per_seed])

    _write_rows(out / "raw_scores.csv",
                ["model", "mode", "seed", "sample_id", "label", "score"], raw_rows)
    table = []
    for key in report_keys:
        for metric, stats in summary[key].items():
            table.append([key, metric, round(100.0 * stats["mean"], 1),
                          round(100.0 * stats["std"], 1)])
    _write_rows(out / "table.csv",
                ["detector", "metric", "mean_percent", "std_percent"], table)

    payload = {"experiment": "ood", "task": config["task"],
               "seeds": list(config["seeds"]), "config": config,
               "per_seed": per_seed, "summary": summary}
    _write_results(out, payload)
    return payload


def run_misclassification_experiment(config: dict) -> dict:
    out = _prepare_output(config)
    raw_rows = []
    per_seed = []
    for seed in config["seeds"]:
        ds = _build_classification_data(config, seed)
        x_train, y_train = ds.subset("train")
        x_test, y_test = ds.subset("test")
        n_classes = int(ds.y.max()) + 1
        model = _model_for(config, ds.x.shape[1], n_classes, seed)
        log = train(model, x_train, y_train, _train_config(config, seed),
                    checkpoint_dir=out / f"model_seed{seed}")
        log.write_csv(out / f"trainlog_seed{seed}.csv")

        pb = model.forward_paths(x_test, config["n_paths_test"],
                                 seed=substream(seed, 63).integers(2 ** 31))
        mean_probs = pb.mean_probs()
        predicted = mean_probs.argmax(axis=-1)
        confidence = mean_probs.max(axis=-1)
        correct = predicted == y_test
        n_correct, n_wrong = int(correct.sum()), int((~correct).sum())
        if n_correct == 0 or n_wrong == 0:
            raise UndefinedMetricError(
                f"seed {seed}: degenerate split for misclassification detection "
                f"({n_correct} correct, {n_wrong} misclassified)")
        report = detection_report(from_scores(confidence[correct], confidence[~correct]),
                                  ece_value=ece(confidence, correct.astype(float),
                                                bins=config.get("ece_bins", 15)))
        aleat = batch_aleatoric(pb)
        epist = batch_epistemic(pb)
        for i in range(len(x_test)):
            raw_rows.append(["sde_net", MAX_PROB, seed, i, int(correct[i]),
                             float(confidence[i]), float(aleat[i]), float(epist[i]),
                             int(predicted[i])])
        per_seed.append({
            "seed": seed, "accuracy": float(correct.mean()),
            "n_correct": n_correct, "n_wrong": n_wrong,
            "reports": {"sde_net/max_prob": {
                **report.to_dict(),
                "aupr_succ": report.aupr_in, "aupr_err": report.aupr_out}},
        })

    summary = {"sde_net/max_prob": {
        m: _mean_std([e["reports"]["sde_net/max_prob"][m] for e in per_seed])
        for m in per_seed[0]["reports"]["sde_net/max_prob"]},
        "accuracy": _mean_std([e["accuracy"] for e in per_seed])}
    _write_rows(out / "raw_scores.csv",
                ["model", "mode", "seed", "sample_id", "label", "score",
                 "aleatoric", "epistemic", "predicted"], raw_rows)
    table = [[m, round(100.0 * s["mean"], 1), round(100.0 * s["std"], 1)]
             for m, s in summary["sde_net/max_prob"].items()]
    _write_rows(out / "table.csv", ["metric", "mean_percent", "std_percent"], table)
    payload = {"experiment": "misclassification", "task": config["task"],
               "seeds": list(config["seeds"]), "config": config,
               "per_seed": per_seed, "summary": summary}
    _write_results(out, payload)
    return payload


def run_attack_experiment(config: dict) -> dict:
    out = _prepare_output(config)
    spec = config["attack"]
    raw_rows = []
    per_seed = []
    for seed in config["seeds"]:
        ds = _build_classification_data(config, seed)
        x_train, y_train = ds.subset("train")
        x_test, y_test = ds.subset("test")
        n_eval = min(int(spec.get("n_eval", 150)), len(x_test))
        x_eval, y_eval = x_test[:n_eval], y_test[:n_eval]
        n_classes = int(ds.y.max()) + 1
        model = _model_for(config, ds.x.shape[1], n_classes, seed)
        train(model, x_train, y_train, _train_config(config, seed),
              checkpoint_dir=out / f"model_seed{seed}")
        clamp = (float(ds.x.min()), float(ds.x.max()))
        entry = {"seed": seed, "curves": {}}
        for mode in spec["score_modes"]:
            curve = []
            for eps in spec["epsilon_grid"]:
                attack_config = AttackConfig(
                    kind=spec["kind"], epsilon=float(eps),
                    step_size=spec.get("step_size"),
                    iterations=int(spec.get("iterations", 10)),
                    clamp=clamp, noise_seed=seed)
                report, clean, attacked = adversarial_detection_experiment(
                    model, x_eval, y_eval, attack_config, mode,
                    n_paths=config["n_paths_test"],
                    seed=substream(seed, 64).integers(2 ** 31))
                curve.append({"epsilon": float(eps), **report.to_dict()})
                for i, s in enumerate(clean):
                    raw_rows.append([mode, seed, float(eps), i, 1, float(s)])
                for i, s in enumerate(attacked):
                    raw_rows.append([mode, seed, float(eps), len(clean) + i, 0, float(s)])
            entry["curves"][mode] = curve
        per_seed.append(entry)

    summary = {}
    for mode in spec["score_modes"]:
        mean_curve = []
        for j, eps in enumerate(spec["epsilon_grid"]):
            aurocs = [e["curves"][mode][j]["auroc"] for e in per_seed]
            mean_curve.append({"epsilon": float(eps), "auroc": _mean_std(aurocs)})
        summary[mode] = mean_curve

    _write_rows(out / "raw_scores.csv",
                ["mode", "seed", "epsilon", "sample_id", "label", "score"], raw_rows)
    table = []
    for mode in spec["score_modes"]:
        for point in summary[mode]:
            table.append([mode, point["epsilon"],
                          round(100.0 * point["auroc"]["mean"], 1),
                          round(100.0 * point["auroc"]["std"], 1)])
    _write_rows(out / "table.csv",
                ["mode", "epsilon", "auroc_mean_percent", "auroc_std_percent"], table)
    payload = {"experiment": "attack", "task": config["task"],
               "seeds": list(config["seeds"]), "config": config,
               "per_seed": per_seed, "summary": summary}
    _write_results(out, payload)
    return payload


def run_active_learning(config: dict) -> dict:
    out = _prepare_output(config)
    spec = config["dataset"]
    if spec["kind"] != "gapped_regression":
        raise ConfigError(f"unsupported regression dataset {spec['kind']!r}")
    active = config["active"]
    gap = tuple(spec["gap"])
    domain = tuple(spec["domain"])
    raw_rows = []
    per_seed = []
    for seed in config["seeds"]:
        initial = gen_gapped_regression(spec["n_initial"], gap=gap,
                                        noise_sigma=spec["noise_sigma"], seed=seed,
                                        domain=domain, n_gap_probe=1)
        pool_ds = gen_curve_sample(spec["pool_size"], noise_sigma=spec["noise_sigma"],
                                   seed=500 + seed, domain=domain)
        test_ds = gen_curve_sample(spec["test_size"], noise_sigma=spec["noise_sigma"],
                                   seed=900 + seed, domain=domain)
        x0, y0 = initial.subset("train")
        feat_norm = Normalizer.fit(x0)
        target_norm = Normalizer.fit(y0)

        def factory(s, _config=config, _dim=x0.shape[1]):
            return _model_for(_config, _dim, None, s)

        entry = {"seed": seed, "arms": {}}
        arms = [("weighted", False)]
        if active.get("run_random_control", True):
            arms.append(("random", True))
        for arm_name, is_random in arms:
            pool = PoolState(feat_norm.transform(x0), target_norm.transform(y0),
                             feat_norm.transform(pool_ds.x),
                             target_norm.transform(pool_ds.y))
            result = active_learning_experiment(
                pool, factory, rounds=active["rounds"],
                acquisition_batch=active["acquisition_batch"],
                train_config=_train_config(config, seed),
                x_test=feat_norm.transform(test_ds.x),
                y_test=target_norm.transform(test_ds.y),
                n_paths=config["n_paths_test"], seed=seed,
                warm_start=active.get("warm_start", True),
                random_acquisition=is_random, target_norm=target_norm)
            acquired = (np.concatenate(result.acquired_x)
                        if result.acquired_x else np.empty((0, 1)))
            acquired_raw = feat_norm.inverse(acquired)[:, 0] if len(acquired) else acquired
            in_gap = ((acquired_raw >= gap[0]) & (acquired_raw <= gap[1])) \
                if len(acquired) else np.empty(0, bool)
            entry["arms"][arm_name] = {
                "rmse": result.rmse,
                "labeled_counts": result.labeled_counts,
                "acquired_in_gap": int(in_gap.sum()),
                "acquired_total": int(len(acquired)),
            }
            for rnd, (count, rmse) in enumerate(zip(result.labeled_counts, result.rmse)):
                raw_rows.append([arm_name, seed, rnd, count, float(rmse)])
        per_seed.append(entry)

    pool_gap_fraction = (gap[1] - gap[0]) / (domain[1] - domain[0])
    summary = {"pool_gap_fraction": pool_gap_fraction, "arms": {}}
    for arm_name in per_seed[0]["arms"]:
        finals = [e["arms"][arm_name]["rmse"][-1] for e in per_seed]
        gaps = sum(e["arms"][arm_name]["acquired_in_gap"] for e in per_seed)
        totals = sum(e["arms"][arm_name]["acquired_total"] for e in per_seed)
        summary["arms"][arm_name] = {
            "final_rmse": _mean_std(finals),
            "acquired_in_gap": gaps,
            "acquired_total": totals,
            "gap_fraction": gaps / totals if totals else None,
        }
    _write_rows(out / "raw_scores.csv",
                ["arm", "seed", "round", "labeled_count", "rmse"], raw_rows)
    payload = {"experiment": "active_learning", "task": config["task"],
               "seeds": list(config["seeds"]), "config": config,
               "per_seed": per_seed, "summary": summary}
    _write_results(out, payload)
    return payload


def run_visualization(config: dict) -> dict:
    out = _prepare_output(config)
    viz = config["visualize"]
    seed = config["seeds"][0]
    ds = _build_classification_data(config, seed)
    if ds.x.shape[1] != 2:
        raise ConfigError(f"visualization needs a 2-D input space, got {ds.x.shape[1]}-D")
    x_train, y_train = ds.subset("train")
    model = _model_for(config, 2, int(ds.y.max()) + 1, seed)
    train(model, x_train, y_train, _train_config(config, seed),
          checkpoint_dir=out / f"model_seed{seed}")
    grid = grid_probe(tuple(map(tuple, viz["bounds"])), viz["resolution"])
    g = model.diffusion_value(model.initial_state(Tensor(grid)),
                              model.sigma_max_train).data[:, 0]
    pb = model.forward_paths(grid, config["n_paths_test"],
                             seed=substream(seed, 65).integers(2 ** 31))
    epistemic = batch_epistemic(pb)
    rows = [[float(grid[i, 0]), float(grid[i, 1]), float(g[i]), float(epistemic[i])]
            for i in range(len(grid))]
    _write_rows(out / "heatmap.csv", ["x", "y", "g", "epistemic"], rows)
    payload = {"experiment": "visualize", "task": config["task"],
               "seeds": [seed], "config": config,
               "per_seed": [{"seed": seed, "grid_points": len(grid),
                             "g_mean": float(np.mean(g)),
                             "epistemic_mean": float(np.mean(epistemic))}],
               "summary": {"grid_points": len(grid)}}
    _write_results(out, payload)
    return payload


def run_selfcheck(trials: int = 200, max_size: int = 100, seed: int = 0) -> dict:
    """Cross-check the fast metrics against brute force on random score sets."""
    from . import metrics as fast
    from . import metrics_reference as ref
    rng = np.random.default_rng(seed)
    worst = {name: 0.0 for name in
             ("auroc", "tnr_at_tpr95", "aupr_in", "aupr_out",
              "detection_accuracy", "ece")}
    for _ in range(trials):
        n = int(rng.integers(2, max_size + 1))
        if rng.random() < 0.5:
            scores = rng.normal(size=n)
        else:
            scores = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0], size=n)
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1
        samples = [fast.ScoredSample(float(s), int(l)) for s, l in zip(scores, labels)]
        pairs = [
            ("auroc", fast.auroc(samples), ref.auroc_bruteforce(samples)),
            ("tnr_at_tpr95", fast.tnr_at_tpr(samples), ref.tnr_at_tpr_bruteforce(samples)),
            ("aupr_in", fast.aupr(samples, "in"), ref.aupr_bruteforce(samples, "in")),
            ("aupr_out", fast.aupr(samples, "out"), ref.aupr_bruteforce(samples, "out")),
            ("detection_accuracy", fast.detection_accuracy(samples),
             ref.detection_accuracy_bruteforce(samples)),
        ]
        conf = rng.random(n)
        correct = rng.integers(0, 2, size=n).astype(float)
        pairs.append(("ece", fast.ece(conf, correct), ref.ece_bruteforce(conf, correct)))
        for name, a, b in pairs:
            worst[name] = max(worst[name], abs(a - b))
    passed = all(v < 1e-12 for v in worst.values())
    return {"trials": trials, "worst_abs_difference": worst, "passed": passed}
