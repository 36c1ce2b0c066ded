import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tgkit.core import (
    ClipTimeline,
    GroundTruthRecord,
    Interval,
    PredictionSet,
    Query,
    ScoredInterval,
    UnifiedLabel,
    boundary_of,
)

SETTINGS = dict(max_examples=200, deadline=None)


def make_label(f, d, s):
    return UnifiedLabel(np.asarray(f), np.asarray(d, dtype=float), np.asarray(s, dtype=float))


class TestClipTimeline:
    def test_timestamp_is_clip_center(self):
        tl = ClipTimeline(5, 2.0)
        assert tl.timestamp(3) == 7.0
        np.testing.assert_allclose(tl.timestamps(), [1.0, 3.0, 5.0, 7.0, 9.0])

    def test_from_duration_floors(self):
        assert ClipTimeline.from_duration(10.0, 2.0).num_clips == 5
        assert ClipTimeline.from_duration(11.9, 2.0).num_clips == 5
        assert ClipTimeline.from_duration(0.5, 2.0).num_clips == 1

    def test_duration_and_bounds(self):
        tl = ClipTimeline(4, 1.5)
        assert tl.duration == 6.0
        with pytest.raises(IndexError):
            tl.timestamp(4)
        with pytest.raises(IndexError):
            tl.timestamp(-1)

    def test_validation(self):
        with pytest.raises(ValueError):
            ClipTimeline(0, 2.0)
        with pytest.raises(ValueError):
            ClipTimeline(3, 0.0)

    @given(
        num_clips=st.integers(1, 500),
        clip_len=st.floats(0.01, 100, allow_nan=False),
        frac=st.floats(0, 1, exclude_max=True),
    )
    @settings(**SETTINGS)
    def test_timestamp_formula(self, num_clips, clip_len, frac):
        tl = ClipTimeline(num_clips, clip_len)
        i = int(frac * num_clips)
        assert tl.timestamp(i) == (i + 0.5) * clip_len

    @given(duration=st.floats(0.01, 1e5), clip_len=st.floats(0.01, 100))
    @settings(**SETTINGS)
    def test_from_duration_never_empty(self, duration, clip_len):
        tl = ClipTimeline.from_duration(duration, clip_len)
        assert tl.num_clips >= 1
        assert tl.num_clips * clip_len <= max(duration, clip_len) + 1e-9


class TestInterval:
    def test_basics(self):
        iv = Interval(2.0, 6.0)
        assert iv.length == 4.0
        assert iv.center == 4.0

    def test_order_enforced(self):
        with pytest.raises(ValueError):
            Interval(3.0, 2.0)
        Interval(3.0, 3.0)  # zero length is allowed

    def test_scored_interval(self):
        si = ScoredInterval(Interval(0, 1), 0.5)
        assert si.score == 0.5
        with pytest.raises(ValueError):
            ScoredInterval(Interval(0, 1), float("nan"))


class TestUnifiedLabel:
    def test_consistent_label_accepted(self):
        lab = make_label([1, 0], [[1, 2], [0, 0]], [0.5, 0.0])
        assert len(lab) == 2
        assert lab.foreground_indices.tolist() == [0]

    def test_background_must_be_blank(self):
        with pytest.raises(ValueError):
            make_label([0, 0], [[0, 0], [1, 0]], [0, 0])
        with pytest.raises(ValueError):
            make_label([0, 0], [[0, 0], [0, 0]], [0, 0.5])

    def test_foreground_needs_positive_saliency(self):
        with pytest.raises(ValueError):
            make_label([1], [[1, 1]], [0.0])

    def test_binary_foreground_enforced(self):
        with pytest.raises(ValueError):
            make_label([2], [[1, 1]], [1.0])

    def test_offsets_nonnegative(self):
        with pytest.raises(ValueError):
            make_label([1], [[-0.5, 1]], [1.0])

    def test_saliency_range(self):
        with pytest.raises(ValueError):
            make_label([1], [[1, 1]], [1.5])

    def test_arrays_frozen_and_copied(self):
        f = np.array([1, 0])
        lab = make_label(f, [[1, 1], [0, 0]], [1, 0])
        f[0] = 0  # caller's array stays independent
        assert lab.foreground[0] == 1
        with pytest.raises(ValueError):
            lab.foreground[0] = 0

    def test_equals(self):
        a = make_label([1, 0], [[1, 2], [0, 0]], [1, 0])
        b = make_label([1, 0], [[1, 2], [0, 0]], [1, 0])
        c = make_label([1, 0], [[1, 3], [0, 0]], [1, 0])
        assert a.equals(b)
        assert not a.equals(c)


class TestBoundaryOf:
    def test_reconstructs_interval(self):
        tl = ClipTimeline(5, 2.0)
        lab = make_label(
            [0, 1, 1, 0, 0],
            [[0, 0], [1, 3], [3, 1], [0, 0], [0, 0]],
            [0, 1, 1, 0, 0],
        )
        iv = boundary_of(tl, lab, 1)
        assert (iv.start, iv.end) == (2.0, 6.0)
        assert boundary_of(tl, lab, 2).start == 2.0

    def test_clamps_to_video(self):
        tl = ClipTimeline(2, 2.0)
        lab = make_label([1, 0], [[5, 9], [0, 0]], [1, 0])
        iv = boundary_of(tl, lab, 0)
        assert iv.start == 0.0
        assert iv.end == tl.duration

    def test_background_clip_rejected(self):
        tl = ClipTimeline(2, 2.0)
        lab = make_label([1, 0], [[1, 1], [0, 0]], [1, 0])
        with pytest.raises(ValueError):
            boundary_of(tl, lab, 1)


class TestPredictionSet:
    def test_shapes_checked(self):
        with pytest.raises(ValueError):
            PredictionSet(np.zeros(3), np.zeros((2, 2)), np.zeros(3))

    def test_saliency_range(self):
        with pytest.raises(ValueError):
            PredictionSet(np.zeros(2), np.zeros((2, 2)), np.array([0.0, 1.5]))
        PredictionSet(np.zeros(2), np.zeros((2, 2)), np.array([-1.0, 1.0]))

    def test_offsets_may_be_any_real(self):
        PredictionSet(np.zeros(2), np.array([[-3.0, 2.0], [0.0, 0.0]]), np.zeros(2))


class TestRecords:
    def test_query_kind_checked(self):
        Query("a storm hits", "sentence")
        with pytest.raises(ValueError):
            Query("x", "paragraph")

    def test_record_length_consistency(self):
        tl = ClipTimeline(3, 2.0)
        lab = make_label([1, 0], [[1, 1], [0, 0]], [1, 0])
        with pytest.raises(ValueError):
            GroundTruthRecord("v", tl, Query("q", "sentence"), lab, "interval")

    def test_source_kind_checked(self):
        tl = ClipTimeline(2, 2.0)
        lab = make_label([1, 0], [[1, 1], [0, 0]], [1, 0])
        with pytest.raises(ValueError):
            GroundTruthRecord("v", tl, Query("q", "sentence"), lab, "video")
