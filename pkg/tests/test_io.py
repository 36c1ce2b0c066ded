import json

import numpy as np
import pytest

from tgkit.config import RunConfig
from tgkit.core import ClipTimeline, Interval, PredictionSet, Query
from tgkit.formats import (
    MATRIX_MAGIC,
    MATRIX_TEXT_HEADER,
    SCHEMA_VERSION,
    DatasetRecord,
    MatrixRecord,
    PredictionRecord,
    dataset_record_from_obj,
    dataset_record_to_obj,
    read_dataset,
    read_matrices,
    read_predictions,
    write_dataset,
    write_json_report,
    write_matrices_binary,
    write_matrices_text,
    write_predictions,
)
from tgkit.labels import CurveAnnotation, PointAnnotation, from_intervals


def interval_record(video_id="v1", query_id="q1", num_clips=4, clip_len=2.0):
    timeline_duration = num_clips * clip_len
    intervals = [Interval(clip_len, 3 * clip_len)]
    label = from_intervals(ClipTimeline(num_clips, clip_len), intervals)
    return DatasetRecord(
        video_id=video_id,
        query_id=query_id,
        duration=timeline_duration,
        clip_len=clip_len,
        query=Query("a person opens a door", "sentence"),
        source_kind="interval",
        annotation=intervals,
        label=label,
    )


def point_record(video_id="v2", query_id="q1"):
    return DatasetRecord(
        video_id=video_id,
        query_id=query_id,
        duration=8.0,
        clip_len=2.0,
        query=Query("door", "keywords"),
        source_kind="point",
        annotation=PointAnnotation((1.0, 5.0)),
    )


def curve_record(video_id="v3", query_id="q1"):
    return DatasetRecord(
        video_id=video_id,
        query_id=query_id,
        duration=8.0,
        clip_len=2.0,
        query=Query("door", "concept"),
        source_kind="curve",
        annotation=CurveAnnotation(np.array([0.1, 0.9, 0.8, 0.2])),
    )


def matrix_records():
    rng = np.random.default_rng(3)
    return [
        MatrixRecord("vb", 2.0, ("c0", "c1"), rng.uniform(0, 1, (5, 2))),
        MatrixRecord("va", 1.5, ("c0", "c1", "c2"), rng.uniform(0, 1, (3, 3))),
    ]


class TestDatasetRoundTrip:
    def test_preserves_all_fields(self, tmp_path):
        path = tmp_path / "data.jsonl"
        records = [interval_record(), point_record(), curve_record()]
        write_dataset(records, path)
        back, errors = read_dataset(path)
        assert errors == []
        assert [r.video_id for r in back] == ["v1", "v2", "v3"]
        first = back[0]
        assert first.query.text == "a person opens a door"
        assert first.source_kind == "interval"
        assert [iv.start for iv in first.annotation] == [2.0]
        assert first.label.equals(records[0].label)
        assert back[1].annotation.timestamps == (1.0, 5.0)
        np.testing.assert_allclose(back[2].annotation.values, [0.1, 0.9, 0.8, 0.2])

    def test_canonical_sort_order(self, tmp_path):
        path = tmp_path / "data.jsonl"
        records = [
            interval_record("vb", "q2"),
            interval_record("vb", "q1"),
            interval_record("va", "q9"),
        ]
        write_dataset(records, path)
        back, _ = read_dataset(path)
        assert [(r.video_id, r.query_id) for r in back] == [
            ("va", "q9"),
            ("vb", "q1"),
            ("vb", "q2"),
        ]

    def test_write_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        records = [interval_record(), curve_record()]
        write_dataset(records, a)
        write_dataset(list(reversed(records)), b)
        assert a.read_bytes() == b.read_bytes()

    def test_concepts_round_trip(self, tmp_path):
        rec = interval_record()
        rec.clip_concepts = (
            frozenset({"dog", "park"}),
            frozenset(),
            frozenset({"car"}),
            frozenset({"dog"}),
        )
        path = tmp_path / "data.jsonl"
        write_dataset([rec], path)
        back, _ = read_dataset(path)
        assert back[0].clip_concepts == rec.clip_concepts


class TestDatasetErrors:
    def write_lines(self, tmp_path, lines):
        path = tmp_path / "data.jsonl"
        path.write_text("\n".join(lines) + "\n")
        return path

    def good_line(self):
        return json.dumps(dataset_record_to_obj(point_record()))

    def test_wrong_schema_version(self, tmp_path):
        obj = dataset_record_to_obj(point_record())
        obj["schema_version"] = 99
        path = self.write_lines(tmp_path, [json.dumps(obj)])
        with pytest.raises(ValueError, match="schema_version"):
            read_dataset(path)

    def test_missing_field(self, tmp_path):
        obj = dataset_record_to_obj(point_record())
        del obj["duration"]
        path = self.write_lines(tmp_path, [json.dumps(obj)])
        with pytest.raises(ValueError, match="missing"):
            read_dataset(path)

    def test_unknown_source_kind(self):
        obj = dataset_record_to_obj(point_record())
        obj["source_kind"] = "screenplay"
        with pytest.raises(ValueError, match="source_kind"):
            dataset_record_from_obj(obj)

    def test_label_length_mismatch(self):
        obj = dataset_record_to_obj(interval_record(num_clips=4))
        obj["duration"] = 100.0
        with pytest.raises(ValueError, match="clips"):
            dataset_record_from_obj(obj)

    def test_error_carries_line_number(self, tmp_path):
        path = self.write_lines(tmp_path, [self.good_line(), "{\"schema_version\": 1}"])
        with pytest.raises(ValueError, match=":2:"):
            read_dataset(path)

    def test_skip_collects_line_numbers(self, tmp_path):
        bad = json.dumps({"schema_version": 99})
        path = self.write_lines(tmp_path, [self.good_line(), bad, self.good_line()])
        records, errors = read_dataset(path, on_error="skip")
        assert len(records) == 2
        assert [line for line, _ in errors] == [2]
        assert "schema_version" in errors[0][1]

    def test_bad_on_error_value(self, tmp_path):
        path = self.write_lines(tmp_path, [self.good_line()])
        with pytest.raises(ValueError):
            read_dataset(path, on_error="ignore")

    def test_blank_lines_skipped(self, tmp_path):
        path = self.write_lines(tmp_path, [self.good_line(), "", self.good_line()])
        records, errors = read_dataset(path)
        assert len(records) == 2 and errors == []


class TestPredictionRoundTrip:
    def record(self, video_id="v1", query_id="q1", n=4):
        rng = np.random.default_rng(0)
        pred = PredictionSet(
            rng.normal(size=n), rng.normal(size=(n, 2)), rng.uniform(-1, 1, n)
        )
        return PredictionRecord(video_id, query_id, n * 2.0, 2.0, pred)

    def test_round_trip_exact(self, tmp_path):
        path = tmp_path / "preds.jsonl"
        rec = self.record()
        write_predictions([rec], path)
        back, errors = read_predictions(path)
        assert errors == []
        got = back[0]
        assert (got.video_id, got.query_id) == ("v1", "q1")
        np.testing.assert_array_equal(
            got.prediction.foreground_logits, rec.prediction.foreground_logits
        )
        np.testing.assert_array_equal(got.prediction.offsets, rec.prediction.offsets)
        np.testing.assert_array_equal(got.prediction.saliency, rec.prediction.saliency)

    def test_sorted_and_deterministic(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        recs = [self.record("vb"), self.record("va")]
        write_predictions(recs, a)
        write_predictions(list(reversed(recs)), b)
        assert a.read_bytes() == b.read_bytes()
        back, _ = read_predictions(a)
        assert [r.video_id for r in back] == ["va", "vb"]

    def test_length_mismatch_rejected(self, tmp_path):
        path = tmp_path / "preds.jsonl"
        rec = self.record()
        write_predictions([rec], path)
        obj = json.loads(path.read_text())
        obj["duration"] = 100.0
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(ValueError, match="clips"):
            read_predictions(path)


class TestMatrixContainers:
    def test_text_round_trip_is_exact_f64(self, tmp_path):
        path = tmp_path / "m.txt"
        records = matrix_records()
        write_matrices_text(records, path)
        back = read_matrices(path)
        assert [r.video_id for r in back] == ["va", "vb"]
        by_id = {r.video_id: r for r in back}
        for rec in records:
            got = by_id[rec.video_id]
            assert got.column_names == rec.column_names
            assert got.clip_len == rec.clip_len
            np.testing.assert_array_equal(got.values, rec.values)

    def test_text_header_required(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("not a matrix file\n")
        with pytest.raises(ValueError, match="must start with"):
            read_matrices(path)
        assert MATRIX_TEXT_HEADER.startswith("#")

    def test_binary_round_trip_quantises_to_f32(self, tmp_path):
        path = tmp_path / "m.tgmx"
        records = matrix_records()
        write_matrices_binary(records, path)
        back = read_matrices(path)
        assert [r.video_id for r in back] == ["va", "vb"]
        by_id = {r.video_id: r for r in back}
        for rec in records:
            got = by_id[rec.video_id]
            assert got.column_names == rec.column_names
            np.testing.assert_array_equal(
                got.values, rec.values.astype("<f4").astype(np.float64)
            )

    def test_binary_survives_second_trip_exactly(self, tmp_path):
        # once quantised, further trips are lossless
        p1, p2 = tmp_path / "a.tgmx", tmp_path / "b.tgmx"
        write_matrices_binary(matrix_records(), p1)
        first = read_matrices(p1)
        write_matrices_binary(first, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_magic_sniffing(self, tmp_path):
        text, binary = tmp_path / "m.txt", tmp_path / "m.tgmx"
        records = matrix_records()
        write_matrices_text(records, text)
        write_matrices_binary(records, binary)
        assert binary.read_bytes()[:4] == MATRIX_MAGIC
        assert [r.video_id for r in read_matrices(text)] == ["va", "vb"]
        assert [r.video_id for r in read_matrices(binary)] == ["va", "vb"]

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "m.tgmx"
        write_matrices_binary(matrix_records(), path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(ValueError, match="trailing"):
            read_matrices(path)

    def test_unicode_ids_and_names(self, tmp_path):
        path = tmp_path / "m.tgmx"
        rec = MatrixRecord("vidéo", 2.0, ("café",), np.array([[0.5]]))
        write_matrices_binary([rec], path)
        back = read_matrices(path)
        assert back[0].video_id == "vidéo"
        assert back[0].column_names == ("café",)

    def test_validation(self, tmp_path):
        path = tmp_path / "m.txt"
        with pytest.raises(ValueError, match="2-D"):
            write_matrices_text([MatrixRecord("v", 2.0, (), np.zeros((0, 0)))], path)
        with pytest.raises(ValueError, match="column names"):
            write_matrices_text([MatrixRecord("v", 2.0, ("a",), np.zeros((2, 2)))], path)
        with pytest.raises(ValueError, match="clip_len"):
            write_matrices_text([MatrixRecord("v", 0.0, ("a",), np.zeros((2, 1)))], path)


class TestJsonReport:
    def test_stable_formatting(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        write_json_report({"zeta": 1, "alpha": {"y": 2, "x": 3}}, a)
        write_json_report({"alpha": {"x": 3, "y": 2}, "zeta": 1}, b)
        assert a.read_bytes() == b.read_bytes()
        text = a.read_text()
        assert text.endswith("\n")
        assert text.index("alpha") < text.index("zeta")


class TestRunConfig:
    def test_defaults_round_trip(self):
        cfg = RunConfig()
        assert RunConfig.from_dict(cfg.to_dict()) == cfg

    def test_dump_load(self, tmp_path):
        path = tmp_path / "config.json"
        cfg = RunConfig(tau=0.1, fit_steps=50, map_iou_thresholds=(0.5, 0.75))
        cfg.dump(path)
        assert RunConfig.load(path) == cfg

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            RunConfig.from_dict({"taau": 0.1})

    def test_validation(self):
        with pytest.raises(ValueError):
            RunConfig(loss_aggregation="per_frame")
        with pytest.raises(ValueError):
            RunConfig(nms_iou_threshold=0.0)
        with pytest.raises(ValueError):
            RunConfig(summary_budget_fraction=2.0)
        with pytest.raises(ValueError):
            RunConfig(tau=0.0)
        with pytest.raises(ValueError):
            RunConfig(fit_embed_dim=1)
        with pytest.raises(ValueError):
            RunConfig(recall_iou_thresholds=(0.5, 1.5))

    def test_weights_mirror_config(self):
        cfg = RunConfig(tau=0.09, neg_weight=0.2, smooth_l1_beta=0.5)
        w = cfg.weights()
        assert (w.tau, w.neg_weight, w.smooth_l1_beta) == (0.09, 0.2, 0.5)

    def test_schema_version_constant(self):
        assert SCHEMA_VERSION == 1
