"""Alternating training of the drift side and the diffusion side.

Each iteration runs one task-loss step (updating the input head, drift
net, and output head) on an in-distribution minibatch, then one
diffusion step on a fresh minibatch paired with its Gaussian-perturbed
copy (updating the diffusion net only). The diffusion objective pushes
g down on real inputs and up on perturbed ones; since g is sigmoid
bounded, the signed objective stays in (-sigma_max, sigma_max).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError
from .model import CLASSIFICATION, SdeNet
from .nn import cross_entropy, mean_gaussian_nll
from .optim import SGD
from .rng import substream
from .tensor import Tensor

SIGNED = "signed"
BCE = "bce"


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    lr_drift: float = 0.1
    lr_diffusion: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    drift_lr_decay_epochs: tuple[int, ...] = ()
    diffusion_lr_decay_epochs: tuple[int, ...] = ()
    lr_decay_factor: float = 0.1
    ood_noise_variance: float = 4.0
    paths_per_example_train: int = 1
    val_fraction: float = 0.1
    diffusion_objective: str = SIGNED
    train_diffusion: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.ood_noise_variance <= 0.0:
            raise ConfigError(
                f"ood_noise_variance must be positive, got {self.ood_noise_variance}")
        if self.paths_per_example_train < 1:
            raise ConfigError("paths_per_example_train must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        if self.diffusion_objective not in (SIGNED, BCE):
            raise ConfigError(f"unknown diffusion objective {self.diffusion_objective!r}")


@dataclass
class TrainLog:
    task_loss: list[float] = field(default_factory=list)
    g_id: list[float] = field(default_factory=list)
    g_ood: list[float] = field(default_factory=list)
    val_metric: list[float] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "g_id", "g_ood", "val_metric"])
            rows = zip(self.task_loss, self.g_id, self.g_ood, self.val_metric)
            for epoch, row in enumerate(rows):
                writer.writerow([epoch] + [repr(v) for v in row])


def ood_perturb(x: np.ndarray, variance: float, rng: np.random.Generator) -> np.ndarray:
    """Additive Gaussian noise in raw input space."""
    if variance <= 0.0:
        raise ConfigError(f"perturbation variance must be positive, got {variance}")
    x = np.asarray(x, dtype=np.float64)
    return x + np.sqrt(variance) * rng.standard_normal(x.shape)


def _draw_noise(model: SdeNet, batch: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((model.solver.steps, batch, model.state_dim))


def task_loss(model: SdeNet, x: Tensor, y: np.ndarray, z: np.ndarray,
              sigma_max: float) -> Tensor:
    fp = model.forward_graph(x, z, sigma_max)
    if model.task == CLASSIFICATION:
        return cross_entropy(fp.logits, y)
    return mean_gaussian_nll(fp.mu, fp.sigma, y)


def drift_step(model: SdeNet, x: np.ndarray, y: np.ndarray, optimizer: SGD,
               config: TrainConfig, rng: np.random.Generator) -> float:
    """One update of h1, the drift net, and h2 on the task loss."""
    if len(x) == 0:
        raise ConfigError("empty batch")
    xt = Tensor(np.atleast_2d(x))
    model.zero_grad()
    loss = None
    for _ in range(config.paths_per_example_train):
        z = _draw_noise(model, len(xt.data), rng)
        part = task_loss(model, xt, y, z, model.sigma_max_train)
        loss = part if loss is None else loss + part
    loss = loss * (1.0 / config.paths_per_example_train)
    loss.backward()
    optimizer.step()
    return loss.item()


def diffusion_objective(model: SdeNet, x_id: np.ndarray, x_ood: np.ndarray,
                        kind: str = SIGNED):
    """Loss tensor plus the two logged means; h1 outputs are detached so
    only the diffusion net receives gradients."""
    x0_id = model.initial_state(Tensor(np.atleast_2d(x_id))).detach()
    x0_ood = model.initial_state(Tensor(np.atleast_2d(x_ood))).detach()
    g_id = model.diffusion_value(x0_id, model.sigma_max_train).mean()
    g_ood = model.diffusion_value(x0_ood, model.sigma_max_train).mean()
    if kind == SIGNED:
        loss = g_id - g_ood
    else:
        # binary cross entropy on g/sigma_max with targets 0 (ID) / 1 (OOD),
        # written on the pre-sigmoid logits so saturated outputs stay stable
        logit_id = model.diffusion_logit(x0_id)
        logit_ood = model.diffusion_logit(x0_ood)
        loss = logit_id.softplus().mean() + (-logit_ood).softplus().mean()
    return loss, g_id.item(), g_ood.item()


def diffusion_step(model: SdeNet, x_id: np.ndarray, x_ood: np.ndarray,
                   optimizer: SGD, config: TrainConfig) -> tuple[float, float]:
    """One update of the diffusion net; returns (mean g ID, mean g OOD)."""
    if len(x_id) == 0 or len(x_ood) == 0:
        raise ConfigError("empty batch")
    model.zero_grad()
    loss, g_id, g_ood = diffusion_objective(model, x_id, x_ood,
                                            config.diffusion_objective)
    loss.backward()
    optimizer.step()
    return g_id, g_ood


def evaluate(model: SdeNet, x: np.ndarray, y: np.ndarray, seed: int,
             n_paths: int = 1) -> float:
    """Validation metric: accuracy for classification, RMSE for regression."""
    pb = model.forward_paths(x, n_paths, seed, sigma_max=model.sigma_max_train)
    if model.task == CLASSIFICATION:
        pred = pb.mean_probs().argmax(axis=-1)
        return float((pred == y).mean())
    return float(np.sqrt(((pb.mean_mu() - y) ** 2).mean()))


def _lr_at(base: float, epoch: int, decay_epochs, factor: float) -> float:
    return base * factor ** sum(1 for e in decay_epochs if e <= epoch)


def train(model: SdeNet, x: np.ndarray, y: np.ndarray, config: TrainConfig,
          checkpoint_dir=None, x_ood: np.ndarray | None = None) -> TrainLog:
    """Run the full alternating loop; returns the per-epoch log.

    By default the diffusion net trains against Gaussian-perturbed copies
    of fresh minibatches; pass ``x_ood`` to draw its negative batches from
    an external out-of-distribution pool instead.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y)
    if x_ood is not None:
        x_ood = np.atleast_2d(np.asarray(x_ood, dtype=np.float64))
        if len(x_ood) == 0:
            raise ConfigError("external OOD pool is empty")
    if len(x) != len(y):
        raise ConfigError(f"{len(x)} inputs but {len(y)} labels")
    log = TrainLog()
    if config.epochs == 0:
        if checkpoint_dir is not None:
            model.save(checkpoint_dir)
        return log

    n_val = int(round(config.val_fraction * len(x)))
    perm = substream(config.seed, 1).permutation(len(x))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if len(train_idx) == 0:
        raise ConfigError("no training rows left after validation split")
    x_val, y_val = x[val_idx], y[val_idx]
    x_tr, y_tr = x[train_idx], y[train_idx]

    opt_drift = SGD(model.drift_params(), config.lr_drift,
                    config.momentum, config.weight_decay)
    opt_diff = SGD(model.diffusion_params(), config.lr_diffusion,
                   config.momentum, config.weight_decay)

    for epoch in range(config.epochs):
        opt_drift.lr = _lr_at(config.lr_drift, epoch,
                              config.drift_lr_decay_epochs, config.lr_decay_factor)
        opt_diff.lr = _lr_at(config.lr_diffusion, epoch,
                             config.diffusion_lr_decay_epochs, config.lr_decay_factor)
        rng = substream(config.seed, 2, epoch)
        order = rng.permutation(len(x_tr))
        losses, g_ids, g_oods = [], [], []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            try:
                losses.append(drift_step(model, x_tr[batch], y_tr[batch],
                                         opt_drift, config, rng))
                if config.train_diffusion:
                    fresh = rng.choice(len(x_tr), size=min(len(batch), len(x_tr)),
                                       replace=False)
                    x_fresh = x_tr[fresh]
                    if x_ood is None:
                        x_neg = ood_perturb(x_fresh, config.ood_noise_variance, rng)
                    else:
                        pick = rng.choice(len(x_ood),
                                          size=min(len(batch), len(x_ood)),
                                          replace=False)
                        x_neg = x_ood[pick]
                    g_id, g_ood = diffusion_step(model, x_fresh, x_neg,
                                                 opt_diff, config)
                    g_ids.append(g_id)
                    g_oods.append(g_ood)
            except NumericError as e:
                raise NumericError(
                    f"epoch {epoch}, batch at row {start}: {e}") from None
        log.task_loss.append(float(np.mean(losses)))
        log.g_id.append(float(np.mean(g_ids)) if g_ids else 0.0)
        log.g_ood.append(float(np.mean(g_oods)) if g_oods else 0.0)
        if n_val > 0:
            try:
                log.val_metric.append(evaluate(model, x_val, y_val,
                                               seed=config.seed, n_paths=1))
            except NumericError as e:
                raise NumericError(f"epoch {epoch}, validation: {e}") from None
        else:
            log.val_metric.append(float("nan"))

    if checkpoint_dir is not None:
        model.save(checkpoint_dir)
    return log
