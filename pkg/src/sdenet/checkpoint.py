"""Flat JSON checkpoint for named parameters.

Layout: ``{"format_version": 1, "params": {name: {"shape": [...],
"data": [row-major floats...]}}}``. JSON float serialization uses repr,
so float64 values round-trip exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError

FORMAT_VERSION = 1


def save_params(path, named_params) -> None:
    blob = {
        "format_version": FORMAT_VERSION,
        "params": {
            name: {"shape": list(t.data.shape), "data": t.data.ravel().tolist()}
            for name, t in named_params
        },
    }
    Path(path).write_text(json.dumps(blob, sort_keys=True))


def load_params(path) -> dict[str, np.ndarray]:
    try:
        blob = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"checkpoint not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed checkpoint {path}: {e}") from None
    version = blob.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint format_version {version!r} in {path}")
    out = {}
    for name, entry in blob["params"].items():
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        out[name] = arr
    return out


def load_into(module, path) -> None:
    """Load a checkpoint into a module, verifying names and shapes."""
    stored = load_params(path)
    own = dict(module.named_parameters())
    if set(stored) != set(own):
        missing = sorted(set(own) - set(stored))
        extra = sorted(set(stored) - set(own))
        raise ConfigError(f"checkpoint/model mismatch: missing={missing} extra={extra}")
    for name, tensor in own.items():
        if tuple(stored[name].shape) != tensor.data.shape:
            raise ConfigError(
                f"shape mismatch for {name}: checkpoint {stored[name].shape}, "
                f"model {tensor.data.shape}")
        tensor.data[...] = stored[name]
