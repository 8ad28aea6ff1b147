"""Cheap comparator models for the detection experiments.

The threshold baseline is the same architecture with the diffusion
frozen at zero: a deterministic residual-style net scored by the
probability of its predicted class on a single pass. The deep ensemble
trains several such deterministic nets from different initializations
and scores the averaged prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .model import CLASSIFICATION, SdeNet
from .training import TrainConfig, TrainLog, train


def make_deterministic(task: str, input_dim: int, n_classes: int | None,
                       init_seed: int, **arch) -> SdeNet:
    """Same architecture with sigma_max 0: the noise term vanishes exactly."""
    arch = {k: v for k, v in arch.items()
            if k not in ("sigma_max_train", "sigma_max_test")}
    return SdeNet(task, input_dim, n_classes=n_classes, init_seed=init_seed,
                  sigma_max_train=0.0, sigma_max_test=0.0, **arch)


def train_threshold_baseline(x, y, task: str, n_classes: int | None,
                             config: TrainConfig, init_seed: int = 0,
                             **arch) -> tuple[SdeNet, TrainLog]:
    model = make_deterministic(task, np.atleast_2d(x).shape[1], n_classes,
                               init_seed, **arch)
    log = train(model, x, y, replace(config, train_diffusion=False))
    return model, log


def threshold_scores(model: SdeNet, x: np.ndarray) -> np.ndarray:
    """Max class probability of the single deterministic pass."""
    if model.task != CLASSIFICATION:
        raise ConfigError("threshold scoring requires a classification model")
    pb = model.forward_paths(x, 1, seed=0, sigma_max=0.0)
    return pb.mean_probs().max(axis=-1)


@dataclass
class DeepEnsemble:
    members: list[SdeNet]

    @classmethod
    def fit(cls, x, y, task: str, n_classes: int | None, config: TrainConfig,
            size: int = 5, init_seed: int = 0, **arch) -> "DeepEnsemble":
        if size < 2:
            raise ConfigError(f"ensemble size must be >= 2, got {size}")
        members = []
        for k in range(size):
            model = make_deterministic(task, np.atleast_2d(x).shape[1], n_classes,
                                       init_seed=init_seed * 1000 + k, **arch)
            train(model, x, y,
                  replace(config, train_diffusion=False, seed=config.seed * 1000 + k))
            members.append(model)
        return cls(members)

    def mean_probs(self, x: np.ndarray) -> np.ndarray:
        probs = [m.forward_paths(x, 1, seed=0, sigma_max=0.0).mean_probs()
                 for m in self.members]
        return np.mean(probs, axis=0)

    def scores(self, x: np.ndarray) -> np.ndarray:
        return self.mean_probs(x).max(axis=-1)
