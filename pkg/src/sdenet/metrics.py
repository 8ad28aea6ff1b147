"""Threshold-free detection metrics and calibration error.

All detectors follow the convention: higher score means the positive
class, and a sample is predicted positive when its score is >= the
threshold. Every metric is an exact order statistic (no curve
interpolation), so it is invariant under strictly increasing transforms
of the scores and can be cross-checked against brute-force enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, NumericError, UndefinedMetricError


@dataclass(frozen=True)
class ScoredSample:
    score: float
    label: int  # 1 = positive class, 0 = negative


def from_scores(pos_scores, neg_scores) -> list[ScoredSample]:
    out = [ScoredSample(float(s), 1) for s in np.asarray(pos_scores).ravel()]
    out += [ScoredSample(float(s), 0) for s in np.asarray(neg_scores).ravel()]
    return out


def _split(samples: Sequence[ScoredSample]) -> tuple[np.ndarray, np.ndarray]:
    scores = np.array([s.score for s in samples], dtype=np.float64)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    if not np.all(np.isfinite(scores)):
        raise NumericError("non-finite detector score")
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise UndefinedMetricError(
            f"need both classes: {len(pos)} positive, {len(neg)} negative")
    return pos, neg


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(samples: Sequence[ScoredSample]) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via the rank statistic."""
    pos, neg = _split(samples)
    ranks = _average_ranks(np.concatenate([pos, neg]))
    rank_sum = ranks[:len(pos)].sum()
    u = rank_sum - 0.5 * len(pos) * (len(pos) + 1)
    return u / (len(pos) * len(neg))


def tnr_at_tpr(samples: Sequence[ScoredSample], tpr_target: float = 0.95) -> float:
    """True-negative rate at the loosest threshold keeping TPR >= target.

    The threshold is the k-th largest positive score with
    k = ceil(tpr_target * n_pos); positives exactly at the threshold
    count as detected, negatives strictly below it count as rejected.
    """
    if not 0.0 < tpr_target <= 1.0:
        raise ConfigError(f"tpr_target must be in (0, 1], got {tpr_target}")
    pos, neg = _split(samples)
    k = int(np.ceil(tpr_target * len(pos)))
    threshold = np.sort(pos)[len(pos) - k]
    return float(np.count_nonzero(neg < threshold)) / len(neg)


def aupr(samples: Sequence[ScoredSample], positive: str = "in") -> float:
    """Average precision; ``positive="out"`` flips labels and negates scores."""
    if positive not in ("in", "out"):
        raise ConfigError(f"positive must be 'in' or 'out', got {positive!r}")
    pos, neg = _split(samples)
    if positive == "out":
        pos, neg = -neg, -pos
    scores = np.concatenate([pos, neg])
    is_pos = np.concatenate([np.ones(len(pos), bool), np.zeros(len(neg), bool)])
    order = np.argsort(-scores, kind="mergesort")
    scores, is_pos = scores[order], is_pos[order]

    ap = 0.0
    prev_recall = 0.0
    tp = fp = 0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j + 1 < n and scores[j + 1] == scores[i]:
            j += 1
        tp += int(np.count_nonzero(is_pos[i:j + 1]))
        fp += (j - i + 1) - int(np.count_nonzero(is_pos[i:j + 1]))
        recall = tp / len(pos)
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return ap


def detection_accuracy(samples: Sequence[ScoredSample]) -> float:
    """max over thresholds of 0.5 * (TPR + TNR)."""
    pos, neg = _split(samples)
    best = 0.5  # threshold above every score: TPR 0, TNR 1
    for t in np.unique(np.concatenate([pos, neg])):
        tpr = np.count_nonzero(pos >= t) / len(pos)
        tnr = np.count_nonzero(neg < t) / len(neg)
        best = max(best, 0.5 * (tpr + tnr))
    return float(best)


def ece(confidences, correct, bins: int = 15) -> float:
    """Expected calibration error over equal-width confidence bins."""
    conf = np.asarray(confidences, dtype=np.float64)
    corr = np.asarray(correct, dtype=np.float64)
    if conf.size == 0:
        raise UndefinedMetricError("ece of empty input")
    if conf.shape != corr.shape:
        raise ConfigError(f"shape mismatch: {conf.shape} vs {corr.shape}")
    if np.any(conf < 0.0) or np.any(conf > 1.0):
        raise ConfigError("confidences must lie in [0, 1]")
    idx = np.minimum((conf * bins).astype(np.int64), bins - 1)
    total = 0.0
    for b in range(bins):
        mask = idx == b
        n_b = int(np.count_nonzero(mask))
        if n_b == 0:
            continue
        gap = abs(corr[mask].mean() - conf[mask].mean())
        total += (n_b / conf.size) * gap
    return total


@dataclass
class DetectionReport:
    tnr_at_tpr95: float
    auroc: float
    aupr_in: float
    aupr_out: float
    detection_accuracy: float
    ece: float | None = None

    def to_dict(self) -> dict:
        return {
            "tnr_at_tpr95": self.tnr_at_tpr95,
            "auroc": self.auroc,
            "aupr_in": self.aupr_in,
            "aupr_out": self.aupr_out,
            "detection_accuracy": self.detection_accuracy,
            "ece": self.ece,
        }

    def to_percent_row(self) -> dict:
        """Values as percentages with one decimal, for table assembly."""
        row = {}
        for key, value in self.to_dict().items():
            row[key] = None if value is None else round(100.0 * value, 1)
        return row


def detection_report(samples: Sequence[ScoredSample], ece_value: float | None = None,
                     tpr_target: float = 0.95) -> DetectionReport:
    return DetectionReport(
        tnr_at_tpr95=tnr_at_tpr(samples, tpr_target),
        auroc=auroc(samples),
        aupr_in=aupr(samples, "in"),
        aupr_out=aupr(samples, "out"),
        detection_accuracy=detection_accuracy(samples),
        ece=ece_value,
    )
