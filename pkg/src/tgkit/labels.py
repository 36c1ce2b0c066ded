"""Conversions between annotation styles and the unified per-clip label.

Three source styles are supported: explicit target intervals, dense
saliency curves, and single timestamps.  Each converter emits a
:class:`~tgkit.core.UnifiedLabel` on the video's clip grid; ``intervals_of``
goes the other way by reading maximal foreground runs back as intervals.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ClipTimeline, GroundingWarning, Interval, UnifiedLabel, _frozen, _set

DEFAULT_BIN_WIDTH = 0.05

# Quantisation guard: keeps values like 0.30 / 0.05 (= 5.999...96 in binary
# floating point) in their mathematical bin.
_BIN_EPS = 1e-9

# A curve whose maximum bin is the zero bin can mark a zero-valued clip as
# foreground; its saliency is floored to keep the label's f=1 => s>0 coupling.
_MIN_FOREGROUND_SALIENCY = 1e-9


@dataclass(frozen=True)
class PointAnnotation:
    """Timestamps of single-moment annotations, sorted and de-duplicated."""

    timestamps: tuple

    def __post_init__(self):
        ts = tuple(float(t) for t in self.timestamps)
        if not ts:
            raise ValueError("point annotation must contain at least one timestamp")
        if not all(math.isfinite(t) and t >= 0 for t in ts):
            raise ValueError("timestamps must be finite and non-negative")
        _set(self, "timestamps", tuple(sorted(set(ts))))

    def __len__(self) -> int:
        return len(self.timestamps)


@dataclass(frozen=True, eq=False)
class CurveAnnotation:
    """Dense per-clip relevance curve with values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] < 1:
            raise ValueError(f"curve must be a non-empty 1-D sequence, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("curve values must be finite")
        if (v < 0).any() or (v > 1).any():
            raise ValueError("curve values must lie in [0, 1]")
        _set(self, "values", _frozen(v))

    def __len__(self) -> int:
        return self.values.shape[0]


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as inclusive (first, last) index pairs."""
    runs = []
    start = None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(mask) - 1))
    return runs


def from_intervals(timeline: ClipTimeline, intervals: Sequence[Interval]) -> UnifiedLabel:
    """Label from explicit target intervals.

    A clip is foreground when its centre falls inside any interval; its
    offsets point at the covering interval whose centre is nearest (ties go
    to the earlier interval).  Foreground saliency is the constant 1.0; the
    interval style carries no graded relevance of its own.
    """
    intervals = [iv if isinstance(iv, Interval) else Interval(*iv) for iv in intervals]
    duration = timeline.duration
    for iv in intervals:
        if iv.start < 0 or iv.end > duration:
            raise ValueError(f"interval [{iv.start}, {iv.end}] exceeds the video [0, {duration}]")
    n = timeline.num_clips
    f = np.zeros(n, dtype=np.int8)
    d = np.zeros((n, 2), dtype=np.float64)
    s = np.zeros(n, dtype=np.float64)
    if not intervals:
        warnings.warn("empty interval list; label is all background", GroundingWarning)
        return UnifiedLabel(f, d, s)
    for i in range(n):
        t = timeline.timestamp(i)
        covering = [
            (abs(iv.center - t), iv.start, iv.end, k)
            for k, iv in enumerate(intervals)
            if iv.start <= t <= iv.end
        ]
        if not covering:
            continue
        _, start, end, _ = min(covering)
        f[i] = 1
        d[i] = (t - start, end - t)
        s[i] = 1.0
    if not f.any():
        warnings.warn("no clip centre falls inside any interval; label is all background",
                      GroundingWarning)
    return UnifiedLabel(f, d, s)


def bin_index(values, bin_width: float = DEFAULT_BIN_WIDTH) -> np.ndarray:
    """Quantised bin of each curve value."""
    if not 0 < bin_width <= 1:
        raise ValueError(f"bin width must lie in (0, 1], got {bin_width}")
    v = np.asarray(values, dtype=np.float64)
    return np.floor(v / bin_width + _BIN_EPS).astype(np.int64)


def from_curve(timeline: ClipTimeline, curve, bin_width: float = DEFAULT_BIN_WIDTH) -> UnifiedLabel:
    """Label from a dense relevance curve.

    The curve is quantised into ``bin_width`` bins; clips sharing the maximal
    bin are foreground and their maximal runs form the target intervals.
    Saliency keeps the raw curve with background zeroed.
    """
    if not isinstance(curve, CurveAnnotation):
        curve = CurveAnnotation(np.asarray(curve, dtype=np.float64))
    if len(curve) != timeline.num_clips:
        raise ValueError(
            f"curve covers {len(curve)} clips but timeline has {timeline.num_clips}"
        )
    values = curve.values
    bins = bin_index(values, bin_width)
    fg = bins == bins.max()
    n = timeline.num_clips
    f = np.zeros(n, dtype=np.int8)
    d = np.zeros((n, 2), dtype=np.float64)
    s = np.zeros(n, dtype=np.float64)
    length = timeline.clip_len
    for first, last in _runs(fg):
        start = first * length
        end = (last + 1) * length
        for i in range(first, last + 1):
            t = timeline.timestamp(i)
            f[i] = 1
            d[i] = (t - start, end - t)
    s[fg] = np.maximum(values[fg], _MIN_FOREGROUND_SALIENCY)
    return UnifiedLabel(f, d, s)


def from_points(timeline: ClipTimeline, points) -> list[UnifiedLabel]:
    """One label per annotated timestamp.

    Each timestamp is widened into a symmetric window whose span is the mean
    gap between consecutive timestamps (twice the clip length when only one
    timestamp exists), clamped to the video.
    """
    if not isinstance(points, PointAnnotation):
        points = PointAnnotation(tuple(points))
    duration = timeline.duration
    for t in points.timestamps:
        if t > duration:
            raise ValueError(f"timestamp {t} exceeds the video duration {duration}")
    ts = points.timestamps
    if len(ts) >= 2:
        span = float(np.mean(np.diff(ts)))
    else:
        span = 2.0 * timeline.clip_len
    labels = []
    for p in ts:
        window = Interval(max(0.0, p - span / 2), min(duration, p + span / 2))
        labels.append(from_intervals(timeline, [window]))
    return labels


def intervals_of(timeline: ClipTimeline, label: UnifiedLabel) -> list[Interval]:
    """Maximal foreground runs read back as clip-aligned intervals."""
    if len(label) != timeline.num_clips:
        raise ValueError(
            f"label covers {len(label)} clips but timeline has {timeline.num_clips}"
        )
    length = timeline.clip_len
    return [
        Interval(first * length, (last + 1) * length)
        for first, last in _runs(label.foreground == 1)
    ]
