"""Brute-force reference implementations of the detection metrics.

Deliberately naive (explicit pairwise counting and full threshold
enumeration) so they stay an independent cross-check of the fast
implementations in ``metrics``. Used by the selfcheck command and the
test suite; never by the experiment pipeline itself.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import UndefinedMetricError
from .metrics import ScoredSample


def _split_lists(samples: Sequence[ScoredSample]):
    pos = [s.score for s in samples if s.label == 1]
    neg = [s.score for s in samples if s.label == 0]
    if not pos or not neg:
        raise UndefinedMetricError("need both classes")
    return pos, neg


def auroc_bruteforce(samples: Sequence[ScoredSample]) -> float:
    pos, neg = _split_lists(samples)
    u = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                u += 1.0
            elif p == q:
                u += 0.5
    return u / (len(pos) * len(neg))


def tnr_at_tpr_bruteforce(samples: Sequence[ScoredSample], tpr_target: float = 0.95) -> float:
    pos, neg = _split_lists(samples)
    for t in sorted(set(pos + neg), reverse=True):
        detected = sum(1 for p in pos if p >= t)
        if detected / len(pos) >= tpr_target:
            return sum(1 for q in neg if q < t) / len(neg)
    raise AssertionError("unreachable: the minimum score always reaches TPR 1")


def aupr_bruteforce(samples: Sequence[ScoredSample], positive: str = "in") -> float:
    pos, neg = _split_lists(samples)
    if positive == "out":
        pos, neg = [-q for q in neg], [-p for p in pos]
    ap = 0.0
    prev_recall = 0.0
    for t in sorted(set(pos + neg), reverse=True):
        tp = sum(1 for p in pos if p >= t)
        fp = sum(1 for q in neg if q >= t)
        recall = tp / len(pos)
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def detection_accuracy_bruteforce(samples: Sequence[ScoredSample]) -> float:
    pos, neg = _split_lists(samples)
    best = 0.5
    for t in set(pos + neg):
        tpr = sum(1 for p in pos if p >= t) / len(pos)
        tnr = sum(1 for q in neg if q < t) / len(neg)
        best = max(best, 0.5 * (tpr + tnr))
    return best


def ece_bruteforce(confidences, correct, bins: int = 15) -> float:
    conf = list(np.asarray(confidences, dtype=np.float64).ravel())
    corr = list(np.asarray(correct, dtype=np.float64).ravel())
    if not conf:
        raise UndefinedMetricError("ece of empty input")
    total = 0.0
    for b in range(bins):
        members = [(c, k) for c, k in zip(conf, corr)
                   if min(int(c * bins), bins - 1) == b]
        if not members:
            continue
        acc = sum(k for _, k in members) / len(members)
        avg_conf = sum(c for c, _ in members) / len(members)
        total += (len(members) / len(conf)) * abs(acc - avg_conf)
    return total
