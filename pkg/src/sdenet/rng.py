"""Reproducible random streams.

Stochastic forward passes draw their noise from counter-based Philox
streams keyed by (seed, input index, path index). Streams with distinct
keys are statistically independent, so adding paths, reordering work, or
parallelizing across inputs never changes the numbers any existing path
sees.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

_MASK32 = (1 << 32) - 1
_MASK64 = (1 << 64) - 1


def path_stream(seed: int, input_index: int, path_index: int) -> np.random.Generator:
    """Independent generator for one (input, path) pair under ``seed``."""
    seed, input_index, path_index = int(seed), int(input_index), int(path_index)
    if seed < 0:
        raise ConfigError(f"seed must be nonnegative, got {seed}")
    if not (0 <= input_index <= _MASK32 and 0 <= path_index <= _MASK32):
        raise ConfigError("input/path indices must fit in 32 bits")
    key = np.array([seed & _MASK64, (input_index << 32) | path_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def substream(seed: int, *key: int) -> np.random.Generator:
    """Named substream for non-path uses (data splits, perturbations, init)."""
    seed = int(seed)
    if seed < 0:
        raise ConfigError(f"seed must be nonnegative, got {seed}")
    seq = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))
