"""Turning raw per-clip predictions into task outputs.

Moment retrieval runs greedy interval NMS over per-clip candidates;
highlight detection ranks clips; video summarisation segments the timeline
with a kernel change-point dynamic program and then picks clips under a
length budget.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ClipTimeline, GroundingWarning, Interval, PredictionSet, ScoredInterval, _set
from .losses import sigmoid
from .metrics import temporal_iou

DEFAULT_NMS_THRESHOLD = 0.7
DEFAULT_MAX_SEGMENTS = 20
DEFAULT_MAX_SEGMENT_CLIPS = 200
DEFAULT_BUDGET_FRACTION = 0.02

HIGHLIGHT_MODES = ("f_plus_s", "f_only")
SEGMENT_AGGREGATES = ("mean", "max")


def nms_1d(
    candidates: Sequence[ScoredInterval], iou_threshold: float = DEFAULT_NMS_THRESHOLD
) -> list[ScoredInterval]:
    """Greedy non-maximum suppression over scored intervals.

    Candidates are taken in order of descending score (ties: earlier start,
    then earlier input position); each kept candidate suppresses everything
    overlapping it strictly above the IoU threshold.
    """
    if not 0 < iou_threshold <= 1:
        raise ValueError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    cands = list(candidates)
    if any(not isinstance(c, ScoredInterval) for c in cands):
        raise ValueError("candidates must be ScoredInterval instances")
    order = sorted(range(len(cands)), key=lambda i: (-cands[i].score, cands[i].interval.start, i))
    alive = [True] * len(cands)
    kept = []
    for pos, i in enumerate(order):
        if not alive[i]:
            continue
        kept.append(cands[i])
        for j in order[pos + 1:]:
            if alive[j] and temporal_iou(cands[i].interval, cands[j].interval) > iou_threshold:
                alive[j] = False
    return kept


def decode_moments(
    pred: PredictionSet,
    timeline: ClipTimeline,
    iou_threshold: float = DEFAULT_NMS_THRESHOLD,
    top_k: int | None = None,
    use_saliency: bool = False,
) -> list[ScoredInterval]:
    """Ranked candidate moments from per-clip boundaries.

    Every clip proposes the interval spanned by its offsets (re-ordered if
    inverted, clamped to the video) scored by its foreground probability;
    ``use_saliency`` adds the saliency prediction to the score.  NMS then
    de-duplicates, and ``top_k`` truncates the ranked result.
    """
    if len(pred) != timeline.num_clips:
        raise ValueError(
            f"prediction covers {len(pred)} clips but timeline has {timeline.num_clips}"
        )
    if top_k is not None and top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    t = timeline.timestamps()
    start = t - pred.offsets[:, 0]
    end = t + pred.offsets[:, 1]
    lo = np.clip(np.minimum(start, end), 0.0, timeline.duration)
    hi = np.clip(np.maximum(start, end), 0.0, timeline.duration)
    scores = sigmoid(pred.foreground_logits)
    if use_saliency:
        scores = scores + pred.saliency
    candidates = [
        ScoredInterval(Interval(lo[i], hi[i]), float(scores[i]))
        for i in range(timeline.num_clips)
    ]
    kept = nms_1d(candidates, iou_threshold)
    return kept[:top_k] if top_k is not None else kept


def highlight_scores(pred: PredictionSet, mode: str = "f_plus_s") -> np.ndarray:
    """Per-clip highlight score under the given ranking mode."""
    if mode not in HIGHLIGHT_MODES:
        raise ValueError(f"unknown highlight mode {mode!r}; expected one of {HIGHLIGHT_MODES}")
    scores = sigmoid(pred.foreground_logits)
    if mode == "f_plus_s":
        scores = scores + pred.saliency
    return scores


def decode_highlights(pred: PredictionSet, mode: str = "f_plus_s", k: int = 1) -> np.ndarray:
    """Indices of the top-k clips by highlight score, ties to earlier clips."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = highlight_scores(pred, mode)
    n = scores.shape[0]
    if k > n:
        warnings.warn(f"k={k} exceeds {n} clips; returning all ranked clips", GroundingWarning)
        k = n
    return np.argsort(-scores, kind="stable")[:k]


@dataclass(frozen=True)
class SegmentList:
    """Partition of [0, num_clips) into contiguous segments.

    ``change_points`` holds the interior segment starts in ascending order;
    an empty tuple means a single segment covering the whole video.
    """

    num_clips: int
    change_points: tuple

    def __post_init__(self):
        if self.num_clips < 1:
            raise ValueError(f"num_clips must be >= 1, got {self.num_clips}")
        cps = tuple(int(c) for c in self.change_points)
        if any(not 0 < c < self.num_clips for c in cps):
            raise ValueError(f"change points must lie strictly inside (0, {self.num_clips})")
        if any(a >= b for a, b in zip(cps, cps[1:])):
            raise ValueError("change points must be strictly ascending")
        _set(self, "change_points", cps)
        _set(self, "num_clips", int(self.num_clips))

    @property
    def num_segments(self) -> int:
        return len(self.change_points) + 1

    def segments(self) -> tuple:
        """Half-open (start, end) clip ranges."""
        bounds = (0,) + self.change_points + (self.num_clips,)
        return tuple(zip(bounds[:-1], bounds[1:]))


def _scatter_band(gram: np.ndarray, width: int) -> np.ndarray:
    """Within-segment scatter of every segment up to ``width`` clips.

    Entry (i, w) is sum(K_jj) - sum(K_jk)/len over the segment [i, i+w].
    """
    n = gram.shape[0]
    diag_csum = np.concatenate(([0.0], np.cumsum(np.diag(gram))))
    area = np.zeros((n + 1, n + 1))
    area[1:, 1:] = np.cumsum(np.cumsum(gram, axis=0), axis=1)
    band = np.full((n, width), np.inf)
    for w in range(width):
        i = np.arange(n - w)
        j = i + w
        trace = diag_csum[j + 1] - diag_csum[i]
        block = area[j + 1, j + 1] - area[i, j + 1] - area[j + 1, i] + area[i, i]
        band[i, w] = trace - block / (w + 1.0)
    return band


def kts_segment(
    features=None,
    gram=None,
    max_segments: int = DEFAULT_MAX_SEGMENTS,
    max_clips: int = DEFAULT_MAX_SEGMENT_CLIPS,
    penalty: float = 1.0,
    num_segments: int | None = None,
) -> SegmentList:
    """Kernel change-point segmentation of a clip sequence.

    Dynamic programming minimises total within-segment scatter of the Gram
    matrix for each candidate segment count; unless ``num_segments`` pins
    the count, it is chosen by scatter plus the penalty
    ``penalty * m * (log(n / m) + 1)``.  Among equal-cost segmentations the
    lexicographically smallest change-point tuple wins.
    """
    if (features is None) == (gram is None):
        raise ValueError("provide exactly one of features or gram")
    if features is not None:
        f = np.asarray(features, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] < 1:
            raise ValueError(f"features must be a non-empty (clips, dim) matrix, got {f.shape}")
        if not np.isfinite(f).all():
            raise ValueError("features must be finite")
        k = f @ f.T
    else:
        k = np.asarray(gram, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] < 1:
            raise ValueError(f"gram matrix must be square and non-empty, got shape {k.shape}")
        if not np.isfinite(k).all():
            raise ValueError("gram matrix must be finite")
        if not np.allclose(k, k.T, atol=1e-8):
            raise ValueError("gram matrix must be symmetric")
    if max_segments < 1 or max_clips < 1:
        raise ValueError("max_segments and max_clips must be >= 1")
    if penalty < 0:
        raise ValueError(f"penalty must be non-negative, got {penalty}")
    n = k.shape[0]
    if n > max_segments * max_clips:
        raise ValueError(
            f"{n} clips cannot be covered by {max_segments} segments of at most {max_clips} clips"
        )
    width = min(max_clips, n)
    m_lo = math.ceil(n / width)
    m_hi = min(max_segments, n)
    if num_segments is not None:
        if not m_lo <= num_segments <= m_hi:
            raise ValueError(
                f"num_segments={num_segments} infeasible; must lie in [{m_lo}, {m_hi}]"
            )
        m_hi = num_segments
    band = _scatter_band(k, width)

    # suffix DP: cost[m][i] = least scatter splitting clips [i, n) into m segments
    inf = np.inf
    cost = np.full((m_hi + 1, n + 1), inf)
    first_end = np.zeros((m_hi + 1, n + 1), dtype=np.int64)
    cost[0, n] = 0.0
    for m in range(1, m_hi + 1):
        for i in range(n - 1, -1, -1):
            rem = n - i
            if rem < m or rem > m * width:
                continue
            lengths = np.arange(max(1, rem - (m - 1) * width), min(width, rem - (m - 1)) + 1)
            totals = band[i, lengths - 1] + cost[m - 1, i + lengths]
            best = int(np.argmin(totals))  # first minimum => smallest first segment
            cost[m, i] = totals[best]
            first_end[m, i] = i + lengths[best]

    if num_segments is not None:
        chosen = num_segments
    else:
        chosen = m_lo
        best_crit = inf
        for m in range(m_lo, m_hi + 1):
            crit = cost[m, 0] + penalty * m * (math.log(n / m) + 1.0)
            if crit < best_crit:
                best_crit = crit
                chosen = m
    if not np.isfinite(cost[chosen, 0]):
        raise ValueError(f"no feasible segmentation into {chosen} segments")

    change_points = []
    i = 0
    for m in range(chosen, 1, -1):
        i = int(first_end[m, i])
        change_points.append(i)
    return SegmentList(n, tuple(change_points))


@dataclass(frozen=True)
class SummarySelection:
    """Budgeted clip selection plus per-segment scores."""

    clips: tuple
    segment_scores: tuple

    def __post_init__(self):
        _set(self, "clips", tuple(int(c) for c in self.clips))
        _set(self, "segment_scores", tuple(float(s) for s in self.segment_scores))


def decode_summary(
    pred: PredictionSet,
    segments: SegmentList,
    budget_fraction: float = DEFAULT_BUDGET_FRACTION,
    segment_aggregate: str = "mean",
) -> SummarySelection:
    """Top clips by foreground probability under a proportional budget.

    The budget is max(1, floor(budget_fraction * num_clips)); clips are
    returned in rank order.  Segment scores aggregate the per-clip
    foreground probabilities within each segment.
    """
    if not 0 < budget_fraction <= 1:
        raise ValueError(f"budget_fraction must lie in (0, 1], got {budget_fraction}")
    if segment_aggregate not in SEGMENT_AGGREGATES:
        raise ValueError(
            f"unknown segment aggregate {segment_aggregate!r}; expected one of {SEGMENT_AGGREGATES}"
        )
    n = len(pred)
    if segments.num_clips != n:
        raise ValueError(f"segments cover {segments.num_clips} clips but prediction has {n}")
    scores = sigmoid(pred.foreground_logits)
    budget = max(1, int(math.floor(budget_fraction * n)))
    ranked = np.argsort(-scores, kind="stable")[:budget]
    reduce = np.mean if segment_aggregate == "mean" else np.max
    seg_scores = tuple(float(reduce(scores[a:b])) for a, b in segments.segments())
    return SummarySelection(tuple(int(i) for i in ranked), seg_scores)
