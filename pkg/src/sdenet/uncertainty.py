"""Decomposition of repeated stochastic passes into uncertainty scores.

Aleatoric uncertainty is what the predictive distribution itself says:
mean entropy of the per-path class distributions, or mean predictive
variance for regression. Epistemic uncertainty is the spread across
paths: variance of the terminal state (classification) or of the
predictive mean (regression). With the diffusion frozen at zero, all
paths coincide and the epistemic score is exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, InsufficientSamplesError
from .model import CLASSIFICATION, REGRESSION, PathSample, PredictiveBatch

MAX_PROB = "max_prob"
EPISTEMIC = "epistemic"


@dataclass
class UncertaintyReport:
    aleatoric: float
    epistemic: float
    mean_prediction: np.ndarray | tuple[float, float]
    max_prob: float | None = None


def entropy(probs: np.ndarray) -> np.ndarray:
    """Natural-log entropy along the last axis; 0*log(0) counts as 0."""
    p = np.asarray(probs, dtype=np.float64)
    return -np.sum(np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0), axis=-1)


def sample_variance(values: np.ndarray) -> np.ndarray:
    """Unbiased variance across axis 0, shifted by the first sample so that
    identical samples (e.g. zero diffusion) give exactly 0."""
    d = values - values[0]
    return (np.square(d - d.mean(axis=0)).sum(axis=0)) / (values.shape[0] - 1)


def _stack(samples: Sequence[PathSample], task: str):
    if len(samples) < 1:
        raise InsufficientSamplesError("need at least one path sample")
    if task == CLASSIFICATION:
        return np.stack([s.probs for s in samples])
    if task == REGRESSION:
        return (np.array([s.mu for s in samples]),
                np.array([s.sigma for s in samples]))
    raise ConfigError(f"unknown task {task!r}")


def aleatoric_score(samples: Sequence[PathSample], task: str) -> float:
    """Mean per-path entropy (classification) or mean sigma^2 (regression)."""
    if task == CLASSIFICATION:
        probs = _stack(samples, task)
        return float(entropy(probs).mean())
    mu, sigma = _stack(samples, task)
    return float((sigma ** 2).mean())


def epistemic_score(samples: Sequence[PathSample], task: str) -> float:
    """Spread across paths: per-dimension variance of the terminal state
    averaged over dimensions (classification), or variance of the
    predictive mean (regression). Unbiased, so at least two paths."""
    if len(samples) < 2:
        raise InsufficientSamplesError(
            f"epistemic score needs >= 2 path samples, got {len(samples)}")
    if task == CLASSIFICATION:
        finals = np.stack([s.final_state for s in samples])
        return float(sample_variance(finals).mean())
    if task == REGRESSION:
        mu = np.array([s.mu for s in samples])
        return float(sample_variance(mu))
    raise ConfigError(f"unknown task {task!r}")


def detection_score(samples: Sequence[PathSample], task: str, mode: str) -> float:
    """Scalar detector score. ``max_prob`` is higher for in-distribution
    inputs; ``epistemic`` is higher for out-of-distribution ones. Callers
    orient signs so 'higher = positive class' before computing metrics."""
    if mode == MAX_PROB:
        if task != CLASSIFICATION:
            raise ConfigError("max_prob detection requires a classification task")
        probs = _stack(samples, task)
        return float(probs.mean(axis=0).max())
    if mode == EPISTEMIC:
        return epistemic_score(samples, task)
    raise ConfigError(f"unknown detection mode {mode!r}")


def report(samples: Sequence[PathSample], task: str) -> UncertaintyReport:
    aleatoric = aleatoric_score(samples, task)
    epistemic = epistemic_score(samples, task)
    if task == CLASSIFICATION:
        mean_probs = _stack(samples, task).mean(axis=0)
        return UncertaintyReport(aleatoric, epistemic, mean_probs,
                                 max_prob=float(mean_probs.max()))
    mu, sigma = _stack(samples, task)
    return UncertaintyReport(aleatoric, epistemic, (float(mu.mean()), float(sigma.mean())))


# -- vectorized equivalents over a whole PredictiveBatch ----------------------

def batch_aleatoric(pb: PredictiveBatch) -> np.ndarray:
    if pb.task == CLASSIFICATION:
        return entropy(pb.probs).mean(axis=0)
    return (pb.sigma ** 2).mean(axis=0)


def batch_epistemic(pb: PredictiveBatch) -> np.ndarray:
    if pb.n_paths < 2:
        raise InsufficientSamplesError(
            f"epistemic score needs >= 2 paths, got {pb.n_paths}")
    if pb.task == CLASSIFICATION:
        return sample_variance(pb.final_states).mean(axis=-1)
    return sample_variance(pb.mu)


def batch_detection(pb: PredictiveBatch, mode: str) -> np.ndarray:
    if mode == MAX_PROB:
        if pb.task != CLASSIFICATION:
            raise ConfigError("max_prob detection requires a classification task")
        return pb.mean_probs().max(axis=-1)
    if mode == EPISTEMIC:
        return batch_epistemic(pb)
    raise ConfigError(f"unknown detection mode {mode!r}")
