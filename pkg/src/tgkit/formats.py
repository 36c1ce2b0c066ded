"""On-disk formats: dataset/prediction record lines and matrix containers.

Datasets and predictions are line-delimited JSON, one self-contained record
per line with an explicit schema version.  Clip-by-column matrices
(concept similarities, summarisation features) have a plain-text form and a
compact binary form; both are specified bit-for-bit in docs/formats.md.
Writers emit records in canonical (video_id, query_id) order with sorted
keys so identical inputs always serialise to identical bytes.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import ClipTimeline, Interval, PredictionSet, Query, UnifiedLabel
from .labels import CurveAnnotation, PointAnnotation

SCHEMA_VERSION = 1
MATRIX_MAGIC = b"TGMX"
MATRIX_TEXT_HEADER = "# tgkit-matrix v1"


@dataclass
class DatasetRecord:
    """One (video, query) line of a dataset file."""

    video_id: str
    query_id: str
    duration: float
    clip_len: float
    query: Query
    source_kind: str
    annotation: object = None  # list[Interval] | PointAnnotation | CurveAnnotation
    label: UnifiedLabel | None = None
    clip_concepts: tuple | None = None  # per-clip concept sets, summaries only

    def timeline(self) -> ClipTimeline:
        return ClipTimeline.from_duration(self.duration, self.clip_len)

    def sort_key(self) -> tuple:
        return (self.video_id, self.query_id)


@dataclass
class PredictionRecord:
    """One (video, query) line of a predictions file."""

    video_id: str
    query_id: str
    duration: float
    clip_len: float
    prediction: PredictionSet

    def timeline(self) -> ClipTimeline:
        return ClipTimeline.from_duration(self.duration, self.clip_len)

    def sort_key(self) -> tuple:
        return (self.video_id, self.query_id)


@dataclass
class MatrixRecord:
    """Named clip-by-column matrix for one video."""

    video_id: str
    clip_len: float
    column_names: tuple
    values: np.ndarray

    def timeline(self) -> ClipTimeline:
        return ClipTimeline(self.values.shape[0], self.clip_len)


def _annotation_to_obj(annotation) -> dict | None:
    if annotation is None:
        return None
    if isinstance(annotation, PointAnnotation):
        return {"points": list(annotation.timestamps)}
    if isinstance(annotation, CurveAnnotation):
        return {"curve": annotation.values.tolist()}
    return {"intervals": [[iv.start, iv.end] for iv in annotation]}


def _annotation_from_obj(obj, source_kind: str):
    if obj is None:
        return None
    if "points" in obj:
        return PointAnnotation(tuple(obj["points"]))
    if "curve" in obj:
        return CurveAnnotation(np.asarray(obj["curve"], dtype=np.float64))
    if "intervals" in obj:
        return [Interval(s, e) for s, e in obj["intervals"]]
    raise ValueError(f"annotation for {source_kind!r} record has none of points/curve/intervals")


def dataset_record_to_obj(record: DatasetRecord) -> dict:
    obj = {
        "schema_version": SCHEMA_VERSION,
        "video_id": record.video_id,
        "query_id": record.query_id,
        "duration": record.duration,
        "clip_len": record.clip_len,
        "query": {"text": record.query.text, "kind": record.query.kind},
        "source_kind": record.source_kind,
        "annotation": _annotation_to_obj(record.annotation),
        "label": None,
        "clip_concepts": None,
    }
    if record.label is not None:
        obj["label"] = {
            "foreground": record.label.foreground.tolist(),
            "offsets": record.label.offsets.tolist(),
            "saliency": record.label.saliency.tolist(),
        }
    if record.clip_concepts is not None:
        obj["clip_concepts"] = [sorted(c) for c in record.clip_concepts]
    return obj


def dataset_record_from_obj(obj: dict) -> DatasetRecord:
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    required = ("video_id", "query_id", "duration", "clip_len", "query", "source_kind")
    missing = [key for key in required if key not in obj]
    if missing:
        raise ValueError(f"record is missing fields {missing}")
    query = Query(obj["query"]["text"], obj["query"]["kind"])
    label = None
    if obj.get("label") is not None:
        lab = obj["label"]
        label = UnifiedLabel(
            np.asarray(lab["foreground"]),
            np.asarray(lab["offsets"], dtype=np.float64),
            np.asarray(lab["saliency"], dtype=np.float64),
        )
    concepts = None
    if obj.get("clip_concepts") is not None:
        concepts = tuple(frozenset(str(c) for c in cs) for cs in obj["clip_concepts"])
    record = DatasetRecord(
        video_id=str(obj["video_id"]),
        query_id=str(obj["query_id"]),
        duration=float(obj["duration"]),
        clip_len=float(obj["clip_len"]),
        query=query,
        source_kind=str(obj["source_kind"]),
        annotation=_annotation_from_obj(obj.get("annotation"), obj["source_kind"]),
        label=label,
        clip_concepts=concepts,
    )
    if record.source_kind not in ("point", "interval", "curve"):
        raise ValueError(f"unknown source_kind {record.source_kind!r}")
    timeline = record.timeline()
    if record.label is not None and len(record.label) != timeline.num_clips:
        raise ValueError(
            f"label covers {len(record.label)} clips but the timeline has {timeline.num_clips}"
        )
    return record


def _read_jsonl(path, parse, on_error: str):
    if on_error not in ("raise", "skip"):
        raise ValueError(f"on_error must be 'raise' or 'skip', got {on_error!r}")
    records = []
    errors = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                records.append(parse(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                if on_error == "raise":
                    raise ValueError(f"{path}:{line_no}: {exc}") from exc
                errors.append((line_no, str(exc)))
    return records, errors


def _write_jsonl(path, objs: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for obj in objs:
            handle.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")


def read_dataset(path, on_error: str = "raise"):
    """Parse a dataset file; returns (records, [(line, message), ...])."""
    return _read_jsonl(path, dataset_record_from_obj, on_error)


def write_dataset(records: Sequence[DatasetRecord], path) -> None:
    ordered = sorted(records, key=DatasetRecord.sort_key)
    _write_jsonl(path, (dataset_record_to_obj(r) for r in ordered))


def prediction_record_to_obj(record: PredictionRecord) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "video_id": record.video_id,
        "query_id": record.query_id,
        "duration": record.duration,
        "clip_len": record.clip_len,
        "foreground_logits": record.prediction.foreground_logits.tolist(),
        "offsets": record.prediction.offsets.tolist(),
        "saliency": record.prediction.saliency.tolist(),
    }


def prediction_record_from_obj(obj: dict) -> PredictionRecord:
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    if obj.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(
            f"unsupported schema_version {obj.get('schema_version')!r}; expected {SCHEMA_VERSION}"
        )
    required = ("video_id", "query_id", "duration", "clip_len",
                "foreground_logits", "offsets", "saliency")
    missing = [key for key in required if key not in obj]
    if missing:
        raise ValueError(f"record is missing fields {missing}")
    pred = PredictionSet(
        np.asarray(obj["foreground_logits"], dtype=np.float64),
        np.asarray(obj["offsets"], dtype=np.float64),
        np.asarray(obj["saliency"], dtype=np.float64),
    )
    record = PredictionRecord(
        video_id=str(obj["video_id"]),
        query_id=str(obj["query_id"]),
        duration=float(obj["duration"]),
        clip_len=float(obj["clip_len"]),
        prediction=pred,
    )
    if len(pred) != record.timeline().num_clips:
        raise ValueError(
            f"prediction covers {len(pred)} clips but the timeline has "
            f"{record.timeline().num_clips}"
        )
    return record


def read_predictions(path, on_error: str = "raise"):
    """Parse a predictions file; returns (records, [(line, message), ...])."""
    return _read_jsonl(path, prediction_record_from_obj, on_error)


def write_predictions(records: Sequence[PredictionRecord], path) -> None:
    ordered = sorted(records, key=PredictionRecord.sort_key)
    _write_jsonl(path, (prediction_record_to_obj(r) for r in ordered))


def _validate_matrix_record(record: MatrixRecord) -> MatrixRecord:
    values = np.asarray(record.values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
        raise ValueError(f"matrix must be 2-D and non-empty, got shape {values.shape}")
    names = tuple(str(c) for c in record.column_names)
    if len(names) != values.shape[1]:
        raise ValueError(f"{len(names)} column names for {values.shape[1]} columns")
    if record.clip_len <= 0:
        raise ValueError(f"clip_len must be positive, got {record.clip_len}")
    record.values = values
    record.column_names = names
    return record


def write_matrices_text(records: Sequence[MatrixRecord], path) -> None:
    lines = [MATRIX_TEXT_HEADER]
    for record in sorted(records, key=lambda r: r.video_id):
        record = _validate_matrix_record(record)
        lines.append("video\t%s\t%s" % (record.video_id, repr(float(record.clip_len))))
        lines.append("columns\t" + "\t".join(record.column_names))
        for row in record.values:
            lines.append("\t".join(repr(float(v)) for v in row))
        lines.append("")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _parse_text_matrices(text: str) -> list[MatrixRecord]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MATRIX_TEXT_HEADER:
        raise ValueError(f"matrix text file must start with {MATRIX_TEXT_HEADER!r}")
    records = []
    i = 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        head = lines[i].split("\t")
        if head[0] != "video" or len(head) != 3:
            raise ValueError(f"line {i + 1}: expected 'video\\t<id>\\t<clip_len>'")
        video_id, clip_len = head[1], float(head[2])
        i += 1
        if i >= len(lines) or not lines[i].startswith("columns\t"):
            raise ValueError(f"line {i + 1}: expected a 'columns' line")
        names = tuple(lines[i].split("\t")[1:])
        i += 1
        rows = []
        while i < len(lines) and lines[i].strip() and not lines[i].startswith("video\t"):
            rows.append([float(v) for v in lines[i].split("\t")])
            i += 1
        if not rows:
            raise ValueError(f"matrix for video {video_id!r} has no rows")
        records.append(
            _validate_matrix_record(
                MatrixRecord(video_id, clip_len, names, np.asarray(rows, dtype=np.float64))
            )
        )
    return records


def write_matrices_binary(records: Sequence[MatrixRecord], path) -> None:
    ordered = sorted(records, key=lambda r: r.video_id)
    with open(path, "wb") as handle:
        handle.write(MATRIX_MAGIC)
        handle.write(struct.pack("<II", 1, len(ordered)))
        for record in ordered:
            record = _validate_matrix_record(record)
            vid = record.video_id.encode("utf-8")
            handle.write(struct.pack("<I", len(vid)))
            handle.write(vid)
            rows, cols = record.values.shape
            handle.write(struct.pack("<dII", float(record.clip_len), rows, cols))
            for name in record.column_names:
                raw = name.encode("utf-8")
                handle.write(struct.pack("<I", len(raw)))
                handle.write(raw)
            handle.write(record.values.astype("<f4").tobytes(order="C"))


def _parse_binary_matrices(raw: bytes) -> list[MatrixRecord]:
    view = memoryview(raw)
    if bytes(view[:4]) != MATRIX_MAGIC:
        raise ValueError(f"bad magic bytes; expected {MATRIX_MAGIC!r}")
    version, count = struct.unpack_from("<II", view, 4)
    if version != 1:
        raise ValueError(f"unsupported matrix container version {version}")
    pos = 12
    records = []
    for _ in range(count):
        (id_len,) = struct.unpack_from("<I", view, pos)
        pos += 4
        video_id = bytes(view[pos:pos + id_len]).decode("utf-8")
        pos += id_len
        clip_len, rows, cols = struct.unpack_from("<dII", view, pos)
        pos += 16
        names = []
        for _ in range(cols):
            (name_len,) = struct.unpack_from("<I", view, pos)
            pos += 4
            names.append(bytes(view[pos:pos + name_len]).decode("utf-8"))
            pos += name_len
        n_bytes = rows * cols * 4
        values = np.frombuffer(view, dtype="<f4", count=rows * cols, offset=pos)
        pos += n_bytes
        records.append(
            _validate_matrix_record(
                MatrixRecord(video_id, clip_len, tuple(names),
                             values.reshape(rows, cols).astype(np.float64))
            )
        )
    if pos != len(raw):
        raise ValueError(f"{len(raw) - pos} trailing bytes after the last matrix")
    return records


def read_matrices(path) -> list[MatrixRecord]:
    """Parse a matrix container, sniffing text vs binary by the magic bytes."""
    raw = Path(path).read_bytes()
    if raw[:4] == MATRIX_MAGIC:
        return _parse_binary_matrices(raw)
    return _parse_text_matrices(raw.decode("utf-8"))


def write_json_report(obj: dict, path) -> None:
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )
