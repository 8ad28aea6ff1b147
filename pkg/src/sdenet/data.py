"""Synthetic dataset generators, normalization, and CSV ingestion.

Normalization statistics are always fitted on the training split and
reused verbatim everywhere else, so test RMSE can be mapped back to
original units exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import CLASSIFICATION, REGRESSION
from .rng import substream


@dataclass
class Normalizer:
    """Per-feature affine map to zero mean, unit variance."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> "Normalizer":
        values = np.asarray(values, dtype=np.float64)
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        std = np.where(std > 0.0, std, 1.0)
        return cls(mean=mean, std=std)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


@dataclass
class Dataset:
    """Feature matrix plus labels, with named row-index splits."""

    x: np.ndarray
    y: np.ndarray
    task: str
    splits: dict[str, np.ndarray] = field(default_factory=dict)
    feature_norm: Normalizer | None = None
    target_norm: Normalizer | None = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        if self.task == CLASSIFICATION:
            self.y = np.asarray(self.y, dtype=np.int64)
        else:
            self.y = np.asarray(self.y, dtype=np.float64)
        if len(self.x) != len(self.y):
            raise ConfigError(f"{len(self.x)} feature rows but {len(self.y)} labels")

    @property
    def n(self) -> int:
        return len(self.x)

    def subset(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name not in self.splits:
            raise ConfigError(f"no split {name!r}; have {sorted(self.splits)}")
        idx = self.splits[name]
        return self.x[idx], self.y[idx]


def split_rows(n: int, fractions: dict[str, float], seed: int) -> dict[str, np.ndarray]:
    """Disjoint row-index splits in the given proportions, seed-fixed."""
    if n > 0 and abs(sum(fractions.values()) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {fractions}")
    perm = substream(seed, 101).permutation(n)
    splits = {}
    start = 0
    names = list(fractions)
    for i, name in enumerate(names):
        stop = n if i == len(names) - 1 else start + int(round(fractions[name] * n))
        splits[name] = np.sort(perm[start:stop])
        start = stop
    return splits


def gen_two_gaussians(n_per_class: int, means=((-2.0, 0.0), (2.0, 0.0)),
                      covariance: float = 1.0, seed: int = 0,
                      test_fraction: float = 0.25) -> Dataset:
    """Binary classification from two isotropic Gaussian blobs."""
    means = np.asarray(means, dtype=np.float64)
    if means.shape[0] != 2 or np.allclose(means[0], means[1]):
        raise ConfigError("need two distinct class means")
    if covariance <= 0.0:
        raise ConfigError(f"covariance must be positive, got {covariance}")
    rng = substream(seed, 11)
    dim = means.shape[1]
    xs, ys = [], []
    for label, mean in enumerate(means):
        xs.append(mean + np.sqrt(covariance) * rng.standard_normal((n_per_class, dim)))
        ys.append(np.full(n_per_class, label, dtype=np.int64))
    x = np.concatenate(xs) if xs else np.empty((0, dim))
    y = np.concatenate(ys) if ys else np.empty((0,), dtype=np.int64)
    perm = rng.permutation(len(x))
    x, y = x[perm], y[perm]
    splits = split_rows(len(x), {"train": 1.0 - test_fraction, "test": test_fraction}, seed)
    return Dataset(x, y, CLASSIFICATION, splits=splits)


def regression_curve(x: np.ndarray) -> np.ndarray:
    """Ground-truth target curve for the synthetic regression sets."""
    return np.sin(2.0 * x) + 0.1 * x ** 2


def gen_gapped_regression(n: int, gap=(-1.0, 1.0), noise_sigma: float = 0.1,
                          seed: int = 0, domain=(-4.0, 4.0),
                          n_gap_probe: int = 200) -> Dataset:
    """1-D regression with a training hole.

    Training inputs are uniform over ``domain`` minus ``gap``; a separate
    'gap' split holds labeled probe points from inside the hole.
    """
    lo, hi = float(domain[0]), float(domain[1])
    glo, ghi = float(gap[0]), float(gap[1])
    if not (lo <= glo < ghi <= hi):
        raise ConfigError(f"gap {gap} must lie inside domain {domain}")
    if glo <= lo and ghi >= hi:
        raise ConfigError("gap covers the whole domain; nothing left to train on")
    rng = substream(seed, 12)

    keep = np.empty(0)
    while len(keep) < n:
        draw = rng.uniform(lo, hi, size=2 * max(n, 8))
        draw = draw[(draw < glo) | (draw > ghi)]
        keep = np.concatenate([keep, draw])
    x_train = keep[:n]
    x_gap = rng.uniform(glo, ghi, size=n_gap_probe)

    x = np.concatenate([x_train, x_gap])[:, None]
    y = regression_curve(x[:, 0])
    if noise_sigma > 0.0:
        y = y + noise_sigma * rng.standard_normal(len(y))
    splits = {"train": np.arange(n), "gap": np.arange(n, n + n_gap_probe)}
    return Dataset(x, y, REGRESSION, splits=splits)


def gen_curve_sample(n: int, noise_sigma: float = 0.1, seed: int = 0,
                     domain=(-4.0, 4.0)) -> Dataset:
    """Uniform full-domain sample of the same curve (pools and test sets)."""
    rng = substream(seed, 13)
    x = rng.uniform(float(domain[0]), float(domain[1]), size=n)[:, None]
    y = regression_curve(x[:, 0])
    if noise_sigma > 0.0:
        y = y + noise_sigma * rng.standard_normal(n)
    return Dataset(x, y, REGRESSION)


@dataclass(frozen=True)
class CsvSchema:
    feature_columns: tuple[str, ...]
    target_column: str
    task: str = REGRESSION


def load_csv(path, schema: CsvSchema) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty dataset") from None
        wanted = list(schema.feature_columns) + [schema.target_column]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise ConfigError(f"{path}: missing columns {missing}")
        cols = [header.index(c) for c in wanted]
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ConfigError(
                    f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(row[c]) for c in cols])
            except ValueError as e:
                raise ConfigError(f"{path}:{line_no}: {e}") from None
    if not rows:
        raise ConfigError(f"{path}: empty dataset")
    data = np.asarray(rows, dtype=np.float64)
    return Dataset(data[:, :-1], data[:, -1], schema.task)


def write_csv(dataset: Dataset, path, feature_names=None) -> None:
    path = Path(path)
    names = feature_names or [f"x{i}" for i in range(dataset.x.shape[1])]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + ["y"])
        for row, target in zip(dataset.x, dataset.y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])


def repeat_pad(features: np.ndarray, repeats: int, target_width: int) -> np.ndarray:
    """Tile each row ``repeats`` times, then zero-pad to ``target_width``."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    tiled = np.tile(features, (1, repeats))
    if tiled.shape[1] > target_width:
        raise ConfigError(
            f"{features.shape[1]} features x {repeats} repeats = {tiled.shape[1]} "
            f"exceeds target width {target_width}")
    pad = np.zeros((tiled.shape[0], target_width - tiled.shape[1]))
    return np.concatenate([tiled, pad], axis=1)


def grid_probe(bounds, resolution: int) -> np.ndarray:
    """Inclusive 2-D grid over ``bounds = ((x_lo, x_hi), (y_lo, y_hi))``."""
    if resolution < 2:
        raise ConfigError(f"resolution must be >= 2, got {resolution}")
    (x_lo, x_hi), (y_lo, y_hi) = bounds
    xs = np.linspace(x_lo, x_hi, resolution)
    ys = np.linspace(y_lo, y_hi, resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])
