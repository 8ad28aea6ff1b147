"""The stochastic-dynamics model.

An input head ``h1`` maps raw features into a latent state, a drift net
pushes that state toward the task solution, a diffusion net sets the
Brownian magnitude from the initial state, and an output head ``h2``
reads the terminal state out as class logits or a (mu, sigma) pair.

The diffusion output is a sigmoid scaled by ``sigma_max``, so it stays
in (0, sigma_max); together with ReLU/sigmoid-only activations this
keeps both nets Lipschitz and the state flow well-posed. Train and test
time use separate ``sigma_max`` values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from .errors import ConfigError, NumericError
from .nn import Linear, Module
from .rng import path_stream, substream
from .solver import SolverConfig, integrate
from .tensor import Tensor, concat, softmax

CLASSIFICATION = "classification"
REGRESSION = "regression"

SIGMA_FLOOR = 1e-3  # additive floor on the regression head's predictive sigma


def time_augment(state: Tensor, t: float) -> Tensor:
    """Append the scalar time as one extra input feature per row."""
    col = Tensor(np.full((state.data.shape[0], 1), float(t)))
    return concat([state, col], axis=1)


@dataclass
class PathSample:
    """Output of one stochastic forward pass for one input."""

    final_state: np.ndarray
    g_value: float
    probs: np.ndarray | None = None
    mu: float | None = None
    sigma: float | None = None


@dataclass
class PredictiveBatch:
    """Stacked outputs of M stochastic forward passes over a batch."""

    task: str
    final_states: np.ndarray          # (M, B, d)
    g_values: np.ndarray              # (B,) -- diffusion depends on x_0 only
    probs: np.ndarray | None = None   # (M, B, K)
    mu: np.ndarray | None = None      # (M, B)
    sigma: np.ndarray | None = None   # (M, B)

    @property
    def n_paths(self) -> int:
        return self.final_states.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.final_states.shape[1]

    def mean_probs(self) -> np.ndarray:
        return self.probs.mean(axis=0)

    def mean_mu(self) -> np.ndarray:
        return self.mu.mean(axis=0)

    def samples_for(self, i: int) -> list[PathSample]:
        out = []
        for m in range(self.n_paths):
            if self.task == CLASSIFICATION:
                out.append(PathSample(self.final_states[m, i], float(self.g_values[i]),
                                      probs=self.probs[m, i]))
            else:
                out.append(PathSample(self.final_states[m, i], float(self.g_values[i]),
                                      mu=float(self.mu[m, i]), sigma=float(self.sigma[m, i])))
        return out


@dataclass
class ForwardPass:
    """Differentiable single-path forward: graph handles for training/attacks."""

    x_0: Tensor
    g: Tensor          # (B, 1), already scaled by sigma_max
    x_final: Tensor
    logits: Tensor | None = None
    mu: Tensor | None = None
    sigma: Tensor | None = None


class SdeNet(Module):
    def __init__(self, task: str, input_dim: int, n_classes: int | None = None,
                 state_dim: int = 16, drift_hidden: int = 50, diffusion_hidden: int = 100,
                 steps: int | None = None, terminal_time: float = 1.0,
                 sigma_max_train: float = 1.0, sigma_max_test: float = 10.0,
                 init_seed: int = 0):
        super().__init__()
        if task not in (CLASSIFICATION, REGRESSION):
            raise ConfigError(f"unknown task {task!r}")
        if task == CLASSIFICATION and (n_classes is None or n_classes < 2):
            raise ConfigError("classification needs n_classes >= 2")
        if sigma_max_train < 0.0 or sigma_max_test < 0.0:
            raise ConfigError("sigma_max must be nonnegative")
        if steps is None:
            steps = 6 if task == CLASSIFICATION else 4
        self.task = task
        self.input_dim = input_dim
        self.n_classes = n_classes
        self.state_dim = state_dim
        self.drift_hidden = drift_hidden
        self.diffusion_hidden = diffusion_hidden
        self.solver = SolverConfig(terminal_time=terminal_time, steps=steps)
        self.sigma_max_train = float(sigma_max_train)
        self.sigma_max_test = float(sigma_max_test)
        self.init_seed = init_seed

        rng = substream(init_seed, 0)
        d = state_dim
        self.h1_a = self.register("h1_a", Linear(input_dim, d, rng, init="kaiming"))
        self.h1_b = self.register("h1_b", Linear(d, d, rng, init="kaiming"))
        self.drift_a = self.register("drift_a", Linear(d + 1, drift_hidden, rng, init="kaiming"))
        self.drift_b = self.register("drift_b", Linear(drift_hidden, d, rng, init="kaiming"))
        self.diff_a = self.register("diff_a", Linear(d, diffusion_hidden, rng, init="kaiming"))
        self.diff_b = self.register("diff_b", Linear(diffusion_hidden, 1, rng, init="xavier"))
        out_dim = n_classes if task == CLASSIFICATION else 2
        # small head init keeps initial predictions near zero; the Gaussian
        # NLL is violently curved when |mu - y| starts large
        self.h2 = self.register("h2", Linear(d, out_dim, rng, init="xavier", scale=0.1))

    # -- component forwards --------------------------------------------------

    def initial_state(self, x: Tensor) -> Tensor:
        return self.h1_b(self.h1_a(x).relu())

    def drift_fn(self, state: Tensor, t: float) -> Tensor:
        return self.drift_b(self.drift_a(time_augment(state, t)).relu())

    def diffusion_logit(self, x_0: Tensor) -> Tensor:
        """Pre-sigmoid diffusion activation, shape (B, 1)."""
        return self.diff_b(self.diff_a(x_0).relu())

    def diffusion_unit(self, x_0: Tensor) -> Tensor:
        """Sigmoid output in (0, 1), shape (B, 1), before sigma_max scaling."""
        return self.diffusion_logit(x_0).sigmoid()

    def diffusion_value(self, x_0: Tensor, sigma_max: float) -> Tensor:
        return self.diffusion_unit(x_0) * float(sigma_max)

    def head(self, x_final: Tensor):
        out = self.h2(x_final)
        if self.task == CLASSIFICATION:
            return out
        mu = out[:, 0]
        sigma = out[:, 1].softplus() + SIGMA_FLOOR
        return mu, sigma

    # -- full passes -----------------------------------------------------------

    def drift_params(self) -> list[Tensor]:
        """Parameters of h1, the drift net, and h2 (the task-loss side)."""
        mods = [self.h1_a, self.h1_b, self.drift_a, self.drift_b, self.h2]
        return [p for m in mods for p in m.parameters()]

    def diffusion_params(self) -> list[Tensor]:
        return [p for m in (self.diff_a, self.diff_b) for p in m.parameters()]

    def forward_graph(self, x: Tensor, z: np.ndarray, sigma_max: float,
                      x_0: Tensor | None = None) -> ForwardPass:
        """One differentiable stochastic pass with noise block ``z`` (N, B, d)."""
        if x_0 is None:
            x_0 = self.initial_state(x)
        g = self.diffusion_value(x_0, sigma_max)
        x_final = integrate(x_0, self.drift_fn, g, self.solver, z)
        out = self.head(x_final)
        if self.task == CLASSIFICATION:
            return ForwardPass(x_0, g, x_final, logits=out)
        mu, sigma = out
        return ForwardPass(x_0, g, x_final, mu=mu, sigma=sigma)

    def path_noise(self, batch_size: int, seed: int, path_index: int) -> np.ndarray:
        """Noise block (N, B, d) with one independent stream per input."""
        n, d = self.solver.steps, self.state_dim
        z = np.empty((n, batch_size, d))
        for i in range(batch_size):
            z[:, i, :] = path_stream(seed, i, path_index).standard_normal((n, d))
        return z

    def forward_paths(self, x_raw: np.ndarray, n_paths: int, seed: int,
                      sigma_max: float | None = None) -> PredictiveBatch:
        """M stochastic passes over a batch; the initial state is shared.

        Noise for (input i, path m) comes from the stream keyed by
        (seed, i, m), so results do not depend on M or evaluation order.
        """
        if n_paths < 1:
            raise ConfigError(f"n_paths must be >= 1, got {n_paths}")
        if sigma_max is None:
            sigma_max = self.sigma_max_test
        x = Tensor(np.atleast_2d(np.asarray(x_raw, dtype=np.float64)))
        batch = x.data.shape[0]

        x_0 = self.initial_state(x).detach()
        g = self.diffusion_value(x_0, sigma_max).data[:, 0]

        finals = np.empty((n_paths, batch, self.state_dim))
        probs = mu = sigma = None
        if self.task == CLASSIFICATION:
            probs = np.empty((n_paths, batch, self.n_classes))
        else:
            mu = np.empty((n_paths, batch))
            sigma = np.empty((n_paths, batch))
        for m in range(n_paths):
            z = self.path_noise(batch, seed, m)
            try:
                fp = self.forward_graph(x, z, sigma_max, x_0=x_0)
            except NumericError as e:
                raise NumericError(f"path {m}: {e}") from None
            finals[m] = fp.x_final.data
            if self.task == CLASSIFICATION:
                probs[m] = softmax(fp.logits.data)
            else:
                mu[m] = fp.mu.data
                sigma[m] = fp.sigma.data
        return PredictiveBatch(self.task, finals, g, probs=probs, mu=mu, sigma=sigma)

    # -- persistence -----------------------------------------------------------

    def hyperparams(self) -> dict:
        return {
            "task": self.task,
            "input_dim": self.input_dim,
            "n_classes": self.n_classes,
            "state_dim": self.state_dim,
            "drift_hidden": self.drift_hidden,
            "diffusion_hidden": self.diffusion_hidden,
            "steps": self.solver.steps,
            "terminal_time": self.solver.terminal_time,
            "sigma_max_train": self.sigma_max_train,
            "sigma_max_test": self.sigma_max_test,
            "init_seed": self.init_seed,
        }

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "model.json").write_text(json.dumps(self.hyperparams(), sort_keys=True))
        checkpoint.save_params(directory / "params.json", self.named_parameters())

    @classmethod
    def load(cls, directory) -> "SdeNet":
        directory = Path(directory)
        meta_path = directory / "model.json"
        if not meta_path.exists():
            raise ConfigError(f"no model.json under {directory}")
        meta = json.loads(meta_path.read_text())
        model = cls(**meta)
        checkpoint.load_into(model, directory / "params.json")
        return model
