"""Input-space L-infinity attacks and the clean-vs-attacked detection run.

Attack gradients come from forward passes with the stochastic draws
frozen to a fixed seed, so the gradient is deterministic and the attack
targets the model's mean behavior; averaging the gradient over several
frozen paths is available via ``gradient_paths``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics, uncertainty
from .errors import ConfigError, NumericError
from .model import SdeNet
from .rng import substream
from .tensor import Tensor
from .training import task_loss

FGSM = "fgsm"
PGD = "pgd"


@dataclass
class AttackConfig:
    kind: str = FGSM
    epsilon: float = 0.3
    step_size: float | None = None     # PGD; defaults to epsilon / 4
    iterations: int = 10               # PGD
    clamp: tuple[float, float] | None = None
    noise_seed: int = 0
    gradient_paths: int = 1
    random_start: bool = False

    def __post_init__(self):
        if self.kind not in (FGSM, PGD):
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        if self.epsilon < 0.0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.clamp is not None and not self.clamp[0] < self.clamp[1]:
            raise ConfigError(f"clamp range must satisfy lo < hi, got {self.clamp}")
        if self.gradient_paths < 1:
            raise ConfigError("gradient_paths must be >= 1")

    @property
    def effective_step(self) -> float:
        return self.epsilon / 4.0 if self.step_size is None else self.step_size


def input_gradient(model: SdeNet, x: np.ndarray, y: np.ndarray, seed: int,
                   gradient_paths: int = 1, sigma_max: float | None = None) -> np.ndarray:
    """Gradient of the task loss w.r.t. the raw inputs, frozen noise."""
    if sigma_max is None:
        sigma_max = model.sigma_max_train
    xt = Tensor(np.atleast_2d(np.asarray(x, dtype=np.float64)), requires_grad=True)
    model.zero_grad()
    loss = None
    for m in range(gradient_paths):
        z = model.path_noise(len(xt.data), seed, m)
        part = task_loss(model, xt, y, z, sigma_max)
        loss = part if loss is None else loss + part
    loss = loss * (1.0 / gradient_paths)
    loss.backward()
    if not np.all(np.isfinite(xt.grad)):
        raise NumericError("non-finite input gradient")
    return xt.grad.copy()


def _clamp(x: np.ndarray, clamp) -> np.ndarray:
    if clamp is None:
        return x
    return np.clip(x, clamp[0], clamp[1])


def fgsm(model: SdeNet, x: np.ndarray, y: np.ndarray, epsilon: float,
         clamp=None, seed: int = 0, gradient_paths: int = 1) -> np.ndarray:
    """x + epsilon * sign(input gradient), clamped to the input domain."""
    if epsilon < 0.0:
        raise ConfigError(f"epsilon must be >= 0, got {epsilon}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    grad = input_gradient(model, x, y, seed, gradient_paths)
    return _clamp(x + epsilon * np.sign(grad), clamp)


def pgd(model: SdeNet, x: np.ndarray, y: np.ndarray, config: AttackConfig) -> np.ndarray:
    """Iterated sign steps, each projected back into the epsilon ball."""
    x0 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    lo, hi = x0 - config.epsilon, x0 + config.epsilon
    x_adv = x0.copy()
    if config.random_start:
        start_rng = substream(config.noise_seed, 7)
        x_adv = _clamp(x0 + start_rng.uniform(-config.epsilon, config.epsilon, x0.shape),
                       config.clamp)
        x_adv = np.clip(x_adv, lo, hi)
    for _ in range(config.iterations):
        grad = input_gradient(model, x_adv, y, config.noise_seed, config.gradient_paths)
        x_adv = _clamp(x_adv + config.effective_step * np.sign(grad), config.clamp)
        x_adv = np.clip(x_adv, lo, hi)
    return x_adv


def attack(model: SdeNet, x: np.ndarray, y: np.ndarray, config: AttackConfig) -> np.ndarray:
    if config.kind == FGSM:
        return fgsm(model, x, y, config.epsilon, config.clamp,
                    config.noise_seed, config.gradient_paths)
    return pgd(model, x, y, config)


def adversarial_detection_experiment(model: SdeNet, x_clean: np.ndarray, y: np.ndarray,
                                     config: AttackConfig, score_mode: str,
                                     n_paths: int = 10, seed: int = 0):
    """Score clean inputs (positives) against their attacked versions
    (negatives). Returns (DetectionReport, clean scores, attacked scores),
    with scores oriented so higher means clean."""
    x_adv = attack(model, x_clean, y, config)
    sign = -1.0 if score_mode == uncertainty.EPISTEMIC else 1.0
    clean = sign * uncertainty.batch_detection(
        model.forward_paths(x_clean, n_paths, seed), score_mode)
    attacked = sign * uncertainty.batch_detection(
        model.forward_paths(x_adv, n_paths, seed), score_mode)
    report = metrics.detection_report(metrics.from_scores(clean, attacked))
    return report, clean, attacked
