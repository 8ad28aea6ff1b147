"""Fixed-step Euler-Maruyama integration of the latent state.

One step of the scheme:

    x_{k+1} = x_k + drift(x_k, t_k) * dt + g * sqrt(dt) * z_k

with t_k = k*T/N, dt = T/N, and z_k standard normal. The noise draw is
treated as a constant, so gradients flow through the drift and through
the diffusion magnitude ``g`` (reparameterization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .tensor import Tensor


@dataclass(frozen=True)
class SolverConfig:
    """Time grid: ``steps`` equal subintervals of [0, terminal_time]."""

    terminal_time: float = 1.0
    steps: int = 6

    def __post_init__(self):
        if self.terminal_time <= 0.0:
            raise ConfigError(f"terminal_time must be positive, got {self.terminal_time}")
        if not isinstance(self.steps, int) or self.steps < 1:
            raise ConfigError(f"steps must be a positive integer, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.terminal_time / self.steps

    def time_at(self, k: int) -> float:
        return (k * self.terminal_time) / self.steps


def euler_maruyama_step(x_k: Tensor, k: int, drift_fn, g, config: SolverConfig,
                        z_k: np.ndarray) -> Tensor:
    """Advance the state one subinterval.

    ``drift_fn(state, t)`` returns the drift direction; ``g`` is the
    diffusion magnitude (Tensor broadcastable against the state, or a
    float). ``z_k`` is the standard-normal draw for this step.
    """
    if not 0 <= k < config.steps:
        raise ConfigError(f"step index {k} outside [0, {config.steps})")
    t_k = config.time_at(k)
    drift = drift_fn(x_k, t_k)
    noise = Tensor(z_k * math.sqrt(config.dt))
    if not isinstance(g, Tensor):
        g = Tensor(np.asarray(float(g)))
    try:
        return x_k + drift * config.dt + g * noise
    except NumericError as e:
        raise NumericError(f"non-finite state at step {k}: {e}") from None


def integrate(x_0: Tensor, drift_fn, g, config: SolverConfig, z: np.ndarray) -> Tensor:
    """Run all ``config.steps`` updates; ``z`` has shape (steps, *state)."""
    if z.shape[0] != config.steps:
        raise ConfigError(f"noise block has {z.shape[0]} steps, config wants {config.steps}")
    x = x_0
    for k in range(config.steps):
        x = euler_maruyama_step(x, k, drift_fn, g, config, z[k])
    return x
