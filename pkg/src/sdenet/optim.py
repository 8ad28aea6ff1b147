"""Stochastic gradient descent with classical momentum.

Update rule per parameter:

    v <- momentum * v + (grad + weight_decay * param)
    param <- param - lr * v

A step with any non-finite gradient aborts before touching any
parameter, so the model is never left partially updated.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, NumericError
from .tensor import Tensor


class SGD:
    def __init__(self, params, lr: float, momentum: float = 0.9,
                 weight_decay: float = 0.0):
        if lr <= 0.0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
        if weight_decay < 0.0:
            raise ConfigError(f"weight decay must be nonnegative, got {weight_decay}")
        self.params: list[Tensor] = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            if p.grad is not None:
                p.grad.fill(0.0)

    def step(self):
        for p in self.params:
            if p.grad is None or not np.all(np.isfinite(p.grad)):
                raise NumericError("non-finite or missing gradient; step aborted")
        for p, v in zip(self.params, self.velocity):
            v *= self.momentum
            v += p.grad + self.weight_decay * p.data
            p.data -= self.lr * v
