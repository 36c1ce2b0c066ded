"""Evaluation metrics for moments, highlights, and summaries.

All metrics are deterministic: ranking ties resolve to the earlier clip or
prediction, and matching problems are solved exactly rather than greedily
approximated (except for moment detection, whose score-order greedy match
is itself the protocol).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .core import GroundingWarning, Interval, ScoredInterval, _set

DEFAULT_MAP_THRESHOLDS = (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
DEFAULT_RECALL_THRESHOLDS = (0.3, 0.5, 0.7)


def temporal_iou(a: Interval, b: Interval) -> float:
    """Intersection over union of two intervals.

    Two identical zero-length intervals count as a perfect match (1.0);
    disjoint zero-length intervals count as 0.0.
    """
    inter = max(0.0, min(a.end, b.end) - max(a.start, b.start))
    union = a.length + b.length - inter
    if union <= 0:
        return 1.0 if (a.start == b.start and a.end == b.end) else 0.0
    return inter / union


@dataclass(frozen=True, eq=False)
class MomentEvalItem:
    """Ranked moment predictions and ground truths for one query."""

    query_id: str
    predictions: tuple
    ground_truths: tuple

    def __post_init__(self):
        preds = tuple(self.predictions)
        gts = tuple(self.ground_truths)
        if any(not isinstance(p, ScoredInterval) for p in preds):
            raise ValueError("predictions must be ScoredInterval instances")
        if any(not isinstance(g, Interval) for g in gts):
            raise ValueError("ground truths must be Interval instances")
        # normalise to rank order; stable, so caller order breaks score ties
        order = sorted(range(len(preds)), key=lambda i: -preds[i].score)
        _set(self, "predictions", tuple(preds[i] for i in order))
        _set(self, "ground_truths", gts)


@dataclass(frozen=True, eq=False)
class HighlightEvalItem:
    """Per-clip scores and binary relevance for one query."""

    query_id: str
    clip_scores: np.ndarray
    gt_positive: np.ndarray

    def __post_init__(self):
        scores = np.array(self.clip_scores, dtype=np.float64)
        positive = np.array(self.gt_positive)
        if scores.ndim != 1 or scores.shape[0] < 1:
            raise ValueError(f"clip_scores must be non-empty 1-D, got shape {scores.shape}")
        if positive.shape != scores.shape:
            raise ValueError(
                f"gt_positive shape {positive.shape} does not match scores {scores.shape}"
            )
        if not np.isfinite(scores).all():
            raise ValueError("clip scores must be finite")
        if not np.isin(positive, (0, 1, False, True)).all():
            raise ValueError("gt_positive entries must be binary")
        scores.setflags(write=False)
        positive = positive.astype(bool)
        positive.setflags(write=False)
        _set(self, "clip_scores", scores)
        _set(self, "gt_positive", positive)

    @property
    def num_positives(self) -> int:
        return int(self.gt_positive.sum())


@dataclass(frozen=True)
class SummaryEvalItem:
    """Selected clips, reference clips, and the per-clip concept map."""

    predicted_clips: tuple
    gt_clips: tuple
    clip_concepts: Mapping[int, frozenset]

    def __post_init__(self):
        pred = tuple(sorted(int(i) for i in set(self.predicted_clips)))
        gt = tuple(sorted(int(i) for i in set(self.gt_clips)))
        if any(i < 0 for i in pred + gt):
            raise ValueError("clip indices must be non-negative")
        concepts = {int(i): frozenset(str(c) for c in cs) for i, cs in self.clip_concepts.items()}
        missing = [i for i in pred + gt if i not in concepts]
        if missing:
            raise ValueError(f"concept map missing clips {sorted(set(missing))}")
        _set(self, "predicted_clips", pred)
        _set(self, "gt_clips", gt)
        _set(self, "clip_concepts", concepts)


class RecallResult(NamedTuple):
    recall: dict
    miou: float


class QfvsScore(NamedTuple):
    precision: float
    recall: float
    f1: float


def _rank_order(scores: np.ndarray) -> np.ndarray:
    """Indices sorted by descending score; earlier index wins ties."""
    return np.argsort(-scores, kind="stable")


def recall_at_k(
    items: Sequence[MomentEvalItem],
    k: int = 1,
    thresholds: Sequence[float] = DEFAULT_RECALL_THRESHOLDS,
) -> RecallResult:
    """Recall@k over IoU thresholds, plus mean top-1 IoU.

    An item counts as recalled at threshold t when any of its first k
    predictions reaches IoU >= t against any ground truth.  mIoU averages
    each item's best IoU between the single top prediction and its ground
    truths; items without predictions contribute 0.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    thresholds = tuple(float(t) for t in thresholds)
    if any(not 0 < t <= 1 for t in thresholds):
        raise ValueError(f"thresholds must lie in (0, 1], got {thresholds}")
    if not items:
        raise ValueError("recall over zero items is undefined")
    hits = {t: 0 for t in thresholds}
    iou_sum = 0.0
    for item in items:
        if not item.ground_truths:
            raise ValueError(f"item {item.query_id!r} has no ground truths")
        top = item.predictions[:k]
        best = {t: False for t in thresholds}
        for pred in top:
            for gt in item.ground_truths:
                iou = temporal_iou(pred.interval, gt)
                for t in thresholds:
                    if iou >= t:
                        best[t] = True
        for t in thresholds:
            hits[t] += best[t]
        if item.predictions:
            iou_sum += max(
                temporal_iou(item.predictions[0].interval, gt) for gt in item.ground_truths
            )
    n = len(items)
    return RecallResult({t: hits[t] / n for t in thresholds}, iou_sum / n)


def _average_precision(tp_flags: Sequence[bool], num_positive: int) -> float:
    """Exact area under the precision-recall staircase."""
    if num_positive == 0:
        return 0.0
    ap = 0.0
    tp = 0
    for rank, flag in enumerate(tp_flags, start=1):
        if flag:
            tp += 1
            ap += tp / rank
    return ap / num_positive


def moment_map(
    items: Sequence[MomentEvalItem],
    thresholds: Sequence[float] = DEFAULT_MAP_THRESHOLDS,
) -> dict:
    """Detection mAP over a threshold sweep.

    Per item and threshold, predictions are matched greedily in rank order
    to the unmatched ground truth of highest IoU; a match at or above the
    threshold is a true positive.  AP is the exact area under the
    precision-recall staircase; mAP averages over items, and the headline
    number averages mAP over thresholds.
    """
    thresholds = tuple(float(t) for t in thresholds)
    if any(not 0 < t <= 1 for t in thresholds):
        raise ValueError(f"thresholds must lie in (0, 1], got {thresholds}")
    if not items:
        raise ValueError("mAP over zero items is undefined")
    per_threshold = {}
    for t in thresholds:
        aps = []
        for item in items:
            if not item.ground_truths:
                raise ValueError(f"item {item.query_id!r} has no ground truths")
            matched = [False] * len(item.ground_truths)
            flags = []
            for pred in item.predictions:
                best_iou = -1.0
                best_gt = -1
                for g, gt in enumerate(item.ground_truths):
                    if matched[g]:
                        continue
                    iou = temporal_iou(pred.interval, gt)
                    if iou > best_iou:
                        best_iou = iou
                        best_gt = g
                if best_gt >= 0 and best_iou >= t:
                    matched[best_gt] = True
                    flags.append(True)
                else:
                    flags.append(False)
            aps.append(_average_precision(flags, len(item.ground_truths)))
        per_threshold[t] = float(np.mean(aps))
    return {
        "map_per_threshold": per_threshold,
        "average_map": float(np.mean(list(per_threshold.values()))),
    }


def hit_at_1(items: Sequence[HighlightEvalItem]) -> float:
    """Fraction of items whose single top-scored clip is a positive.

    Items without any positive clip are excluded (with a warning carrying
    the count) rather than scored as misses.
    """
    eligible = [item for item in items if item.num_positives > 0]
    excluded = len(items) - len(eligible)
    if excluded:
        warnings.warn(
            f"hit_at_1 excluded {excluded} item(s) without positive clips", GroundingWarning
        )
    if not eligible:
        raise ValueError("hit_at_1 is undefined: no item has a positive clip")
    hits = 0
    for item in eligible:
        top = int(np.argmax(item.clip_scores))  # argmax takes the earliest tie
        hits += bool(item.gt_positive[top])
    return hits / len(eligible)


def highlight_map(items: Sequence[HighlightEvalItem]) -> float:
    """Mean average precision of the per-clip ranking against binary relevance."""
    if not items:
        raise ValueError("highlight mAP over zero items is undefined")
    aps = []
    for item in items:
        if item.num_positives == 0:
            raise ValueError(f"item {item.query_id!r} has no positive clips")
        order = _rank_order(item.clip_scores)
        flags = item.gt_positive[order]
        aps.append(_average_precision(flags.tolist(), item.num_positives))
    return float(np.mean(aps))


def top5_map(items: Sequence[HighlightEvalItem]) -> dict:
    """mAP truncated at rank 5.

    Only the first five ranked clips are scored and the recall denominator
    is min(5, number of positives).  The exact historical protocol for this
    number is underdocumented, so the report carries a provenance flag.
    """
    if not items:
        raise ValueError("top-5 mAP over zero items is undefined")
    aps = []
    for item in items:
        if item.num_positives == 0:
            raise ValueError(f"item {item.query_id!r} has no positive clips")
        order = _rank_order(item.clip_scores)[:5]
        flags = item.gt_positive[order]
        aps.append(_average_precision(flags.tolist(), min(5, item.num_positives)))
    return {"top5_map": float(np.mean(aps)), "protocol": "reconstructed"}


def concept_iou(a: frozenset, b: frozenset) -> float:
    """Jaccard overlap of two concept sets; empty-vs-empty counts as 0."""
    union = len(a | b)
    if union == 0:
        return 0.0
    return len(a & b) / union


def max_weight_matching(weights) -> tuple:
    """Exact maximum-weight bipartite matching for non-negative weights.

    Returns (pairs, total_weight) where pairs is a list of (row, col) with
    strictly positive weight.  Implemented as the Hungarian potentials
    algorithm on a zero-padded square matrix, O(n^3).
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError(f"weights must be 2-D, got shape {w.shape}")
    if w.size == 0:
        return [], 0.0
    if not np.isfinite(w).all() or (w < 0).any():
        raise ValueError("weights must be finite and non-negative")
    rows, cols = w.shape
    n = max(rows, cols)
    cost = np.zeros((n, n), dtype=np.float64)
    cost[:rows, :cols] = -w  # minimise negated weight == maximise weight

    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    match_col = [0] * (n + 1)  # match_col[j] = row matched to column j, 1-based
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        match_col[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = match_col[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match_col[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match_col[j0] = match_col[j1]
            j0 = j1

    pairs = []
    total = 0.0
    for j in range(1, n + 1):
        i = match_col[j]
        if 1 <= i <= rows and 1 <= j <= cols and w[i - 1, j - 1] > 0:
            pairs.append((i - 1, j - 1))
            total += w[i - 1, j - 1]
    pairs.sort()
    return pairs, total


def qfvs_f1(item: SummaryEvalItem) -> QfvsScore:
    """Concept-overlap F1 between a selected summary and the reference.

    Edge weights are concept-set IoUs between predicted and reference clips;
    an exact maximum-weight matching supplies the shared weight W, giving
    precision W/|pred| and recall W/|gt|.
    """
    pred, gt = item.predicted_clips, item.gt_clips
    if not pred:
        warnings.warn("empty predicted summary; precision reported as 0", GroundingWarning)
    if not gt:
        warnings.warn("empty reference summary; recall reported as 0", GroundingWarning)
    if not pred or not gt:
        return QfvsScore(0.0, 0.0, 0.0)
    weights = np.array(
        [[concept_iou(item.clip_concepts[p], item.clip_concepts[g]) for g in gt] for p in pred]
    )
    _, total = max_weight_matching(weights)
    precision = total / len(pred)
    recall = total / len(gt)
    if precision + recall == 0:
        return QfvsScore(precision, recall, 0.0)
    return QfvsScore(precision, recall, 2 * precision * recall / (precision + recall))
