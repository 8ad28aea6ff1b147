"""Pool-based acquisition loop for regression.

Pool points are weighted by (1 + epistemic/aleatoric)^2, favoring
regions the model is ignorant about but that are not inherently noisy;
a batch is then sampled without replacement with probability
proportional to the weights, labeled by the withheld oracle labels, and
the model is retrained.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import uncertainty
from .errors import ConfigError
from .model import REGRESSION, PredictiveBatch, SdeNet
from .rng import substream
from .training import TrainConfig, train
from .uncertainty import UncertaintyReport


@dataclass
class PoolState:
    """Labeled set plus unlabeled pool; pool labels are the oracle."""

    x_labeled: np.ndarray
    y_labeled: np.ndarray
    x_pool: np.ndarray
    y_pool: np.ndarray

    def __post_init__(self):
        self.x_labeled = np.atleast_2d(np.asarray(self.x_labeled, dtype=np.float64))
        self.x_pool = np.atleast_2d(np.asarray(self.x_pool, dtype=np.float64))
        self.y_labeled = np.asarray(self.y_labeled, dtype=np.float64)
        self.y_pool = np.asarray(self.y_pool, dtype=np.float64)

    @property
    def n_labeled(self) -> int:
        return len(self.x_labeled)

    @property
    def n_pool(self) -> int:
        return len(self.x_pool)

    def acquire(self, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Move pool rows into the labeled set; returns the acquired (x, y)."""
        indices = np.asarray(indices)
        if len(np.unique(indices)) != len(indices):
            raise ConfigError("acquisition indices must be unique")
        x_new, y_new = self.x_pool[indices], self.y_pool[indices]
        keep = np.setdiff1d(np.arange(self.n_pool), indices)
        self.x_labeled = np.concatenate([self.x_labeled, x_new])
        self.y_labeled = np.concatenate([self.y_labeled, y_new])
        self.x_pool = self.x_pool[keep]
        self.y_pool = self.y_pool[keep]
        return x_new, y_new


def acquisition_weight(report: UncertaintyReport) -> float:
    """(1 + epistemic/aleatoric)^2; the sigma floor keeps the ratio finite."""
    return float((1.0 + report.epistemic / report.aleatoric) ** 2)


def acquisition_weights(pb: PredictiveBatch) -> np.ndarray:
    if pb.task != REGRESSION:
        raise ConfigError("acquisition weights are defined for regression")
    epi = uncertainty.batch_epistemic(pb)
    ale = uncertainty.batch_aleatoric(pb)
    return (1.0 + epi / ale) ** 2


def acquire_batch(pool: PoolState, weights: np.ndarray, batch_size: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Sample ``batch_size`` pool indices without replacement, p ~ weights."""
    if batch_size > pool.n_pool:
        raise ConfigError(
            f"cannot acquire {batch_size} from a pool of {pool.n_pool}")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (pool.n_pool,):
        raise ConfigError(f"need one weight per pool point, got {weights.shape}")
    if np.any(weights < 0.0) or weights.sum() <= 0.0:
        raise ConfigError("weights must be nonnegative with positive sum")
    return rng.choice(pool.n_pool, size=batch_size, replace=False,
                      p=weights / weights.sum())


@dataclass
class ActiveLearningResult:
    rmse: list[float] = field(default_factory=list)           # length rounds + 1
    labeled_counts: list[int] = field(default_factory=list)
    acquired_x: list[np.ndarray] = field(default_factory=list)  # per round


def active_learning_experiment(pool: PoolState, model_factory, rounds: int,
                               acquisition_batch: int, train_config: TrainConfig,
                               x_test: np.ndarray, y_test: np.ndarray,
                               n_paths: int = 10, seed: int = 0,
                               warm_start: bool = True,
                               random_acquisition: bool = False,
                               target_norm=None) -> ActiveLearningResult:
    """Train, acquire, retrain; track test RMSE per round.

    ``model_factory(seed)`` builds a fresh model. ``random_acquisition``
    forces all weights to one (the uniform control). RMSE is reported in
    original units when ``target_norm`` is given.
    """
    result = ActiveLearningResult()
    model: SdeNet = model_factory(seed)

    def fit(m):
        train(m, pool.x_labeled, pool.y_labeled, train_config)

    def test_rmse(m) -> float:
        pb = m.forward_paths(x_test, n_paths, seed)
        pred = pb.mean_mu()
        truth = y_test
        if target_norm is not None:
            pred = target_norm.inverse(pred)
            truth = target_norm.inverse(truth)
        return float(np.sqrt(((pred - truth) ** 2).mean()))

    fit(model)
    result.rmse.append(test_rmse(model))
    result.labeled_counts.append(pool.n_labeled)

    for r in range(rounds):
        if random_acquisition:
            weights = np.ones(pool.n_pool)
        else:
            pb = model.forward_paths(pool.x_pool, n_paths, seed)
            weights = acquisition_weights(pb)
        rng = substream(seed, 3, r)
        chosen = acquire_batch(pool, weights, acquisition_batch, rng)
        x_new, _ = pool.acquire(chosen)
        result.acquired_x.append(x_new)
        if not warm_start:
            model = model_factory(seed)
        fit(model)
        result.rmse.append(test_rmse(model))
        result.labeled_counts.append(pool.n_labeled)
    return result
