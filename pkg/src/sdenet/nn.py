"""Small module/parameter layer over the autodiff tensors.

Only what the dense drift/diffusion/head networks need: ``Linear``,
activation wrappers, parameter traversal, and the two task losses.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericError
from .tensor import Tensor, softmax_cross_entropy


class Module:
    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._modules: dict[str, "Module"] = {}

    def register(self, name: str, value):
        if isinstance(value, Tensor):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        else:
            raise TypeError(f"cannot register {type(value).__name__}")
        return value

    def parameters(self):
        yield from self._params.values()
        for m in self._modules.values():
            yield from m.parameters()

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield prefix + name, p
        for mod_name, m in self._modules.items():
            yield from m.named_parameters(prefix + mod_name + ".")

    def zero_grad(self):
        for p in self.parameters():
            if p.grad is not None:
                p.grad.fill(0.0)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)


def kaiming_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def xavier_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear(Module):
    """Dense layer ``x @ w + b``.

    ``init`` picks the weight scheme: "kaiming" ahead of ReLU layers,
    "xavier" for sigmoid/tanh output layers.
    """

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 init: str = "kaiming", scale: float = 1.0):
        super().__init__()
        scheme = {"kaiming": kaiming_uniform, "xavier": xavier_uniform}[init]
        self.w = self.register("w", parameter(scale * scheme(in_dim, out_dim, rng)))
        self.b = self.register("b", parameter(np.zeros(out_dim)))

    def forward(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross entropy over the batch (scalar)."""
    return softmax_cross_entropy(logits, labels).mean()


def gaussian_nll(mu: Tensor, sigma: Tensor, targets: np.ndarray) -> Tensor:
    """Per-example negative log likelihood of ``targets`` under N(mu, sigma^2)."""
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != mu.data.shape:
        raise NumericError(
            f"shape mismatch in 'gaussian_nll': mu {mu.data.shape}, targets {y.shape}")
    resid = (Tensor(y) - mu) / sigma
    return sigma.log() + resid.pow(2.0) * 0.5 + 0.5 * math.log(2.0 * math.pi)


def mean_gaussian_nll(mu: Tensor, sigma: Tensor, targets: np.ndarray) -> Tensor:
    return gaussian_nll(mu, sigma, targets).mean()
