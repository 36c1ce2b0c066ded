"""Command-line pipeline: convert, teacher, losscheck, fit, decode, eval.

Every command is deterministic for a fixed seed: identical inputs produce
byte-identical outputs (reports carry no timestamps and all ranking ties
break by position).  Exit codes: 0 on success, 1 for data or validation
errors, 2 for I/O and usage errors.  Set TGKIT_THREADS to pin the BLAS
thread count before numpy is loaded.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import RunConfig
from .core import GroundTruthRecord, Interval, ScoredInterval
from .decode import (
    decode_highlights,
    decode_moments,
    decode_summary,
    highlight_scores,
    kts_segment,
)
from .formats import (
    DatasetRecord,
    PredictionRecord,
    read_dataset,
    read_matrices,
    read_predictions,
    write_dataset,
    write_json_report,
    write_predictions,
)
from .gradcheck import REGISTERED_LOSSES, grad_check
from .fit import overfit
from .labels import PointAnnotation, from_curve, from_intervals, from_points, intervals_of
from .metrics import (
    HighlightEvalItem,
    MomentEvalItem,
    SummaryEvalItem,
    hit_at_1,
    highlight_map,
    moment_map,
    qfvs_f1,
    recall_at_k,
    top5_map,
)
from .teacher import SimilarityMatrix, pseudo_labels

TASKS = ("moments", "highlights", "summary")


def _check_thread_env() -> None:
    raw = os.environ.get("TGKIT_THREADS")
    if raw is None:
        return
    if not raw.isdigit() or int(raw) < 1:
        raise ValueError(f"TGKIT_THREADS must be a positive integer, got {raw!r}")


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None):
        return RunConfig.load(args.config)
    return RunConfig()


def _pick(value, fallback):
    return fallback if value is None else value


def _tkey(t: float) -> str:
    return f"{float(t):g}"


def _cmd_convert(args) -> int:
    config = _load_config(args)
    bin_width = _pick(args.bin_width, config.curve_bin_width)
    records, errors = read_dataset(args.input, on_error=args.on_error)
    if errors:
        for line_no, message in errors:
            print(f"skipped line {line_no}: {message}", file=sys.stderr)
    out = []
    for rec in records:
        timeline = rec.timeline()
        if rec.label is not None:
            out.append(rec)
            continue
        if rec.annotation is None:
            raise ValueError(
                f"record {rec.video_id}/{rec.query_id} has neither annotation nor label"
            )
        if rec.source_kind == "interval":
            rec.label = from_intervals(timeline, rec.annotation)
            out.append(rec)
        elif rec.source_kind == "curve":
            rec.label = from_curve(timeline, rec.annotation, bin_width)
            out.append(rec)
        else:
            labels = from_points(timeline, rec.annotation)
            for i, (stamp, label) in enumerate(zip(rec.annotation.timestamps, labels)):
                out.append(
                    DatasetRecord(
                        video_id=rec.video_id,
                        query_id=f"{rec.query_id}#p{i}",
                        duration=rec.duration,
                        clip_len=rec.clip_len,
                        query=rec.query,
                        source_kind="point",
                        annotation=PointAnnotation((stamp,)),
                        label=label,
                        clip_concepts=rec.clip_concepts,
                    )
                )
    write_dataset(out, args.output)
    print(f"wrote {len(out)} labeled record(s) to {args.output}")
    return 0


def _cmd_teacher(args) -> int:
    config = _load_config(args)
    k = _pick(args.top_k, config.teacher_top_k)
    bin_width = _pick(args.bin_width, config.curve_bin_width)
    if k < 1:
        raise ValueError(f"top-k must be >= 1, got {k}")
    out = []
    for matrix in read_matrices(args.input):
        sim = SimilarityMatrix(matrix.values, matrix.column_names)
        timeline = matrix.timeline()
        k_eff = min(k, sim.num_concepts)
        for rank, sample in enumerate(pseudo_labels(timeline, sim, k_eff, bin_width)):
            out.append(
                DatasetRecord(
                    video_id=matrix.video_id,
                    query_id=f"concept{rank:02d}",
                    duration=timeline.duration,
                    clip_len=timeline.clip_len,
                    query=sample.query,
                    source_kind="curve",
                    annotation=sample.curve,
                    label=sample.label,
                )
            )
    write_dataset(out, args.output)
    print(f"wrote {len(out)} pseudo-labeled record(s) to {args.output}")
    return 0


def _cmd_losscheck(args) -> int:
    config = _load_config(args)
    epsilon = _pick(args.epsilon, config.gradcheck_epsilon)
    tolerance = _pick(args.tolerance, config.gradcheck_tolerance)
    points = _pick(args.points, config.gradcheck_points)
    seed = _pick(args.seed, config.seed)
    if args.losses is None:
        names = list(REGISTERED_LOSSES)
    else:
        names = [n.strip() for n in args.losses.split(",") if n.strip()]
        unknown = [n for n in names if n not in REGISTERED_LOSSES]
        if unknown:
            raise ValueError(f"unknown losses {unknown}; registered: {list(REGISTERED_LOSSES)}")
    results = {}
    for name in names:
        results[name] = grad_check(
            name, epsilon=epsilon, tolerance=tolerance, seed=seed, num_points=points
        )
    report = {
        "epsilon": epsilon,
        "tolerance": tolerance,
        "seed": seed,
        "num_points": points,
        "losses": {name: res.to_dict() for name, res in results.items()},
        "all_passed": all(res.passed for res in results.values()),
    }
    write_json_report(report, args.output)
    for name in names:
        res = results[name]
        status = "ok" if res.passed else "FAIL"
        print(f"{name}: {status} (max rel err {res.max_rel_error:.3e})")
    if not report["all_passed"]:
        print("gradient check failed", file=sys.stderr)
        return 1
    return 0


def _cmd_fit(args) -> int:
    config = _load_config(args)
    steps = _pick(args.steps, config.fit_steps)
    learning_rate = _pick(args.learning_rate, config.fit_learning_rate)
    embed_dim = _pick(args.embed_dim, config.fit_embed_dim)
    seed = _pick(args.seed, config.seed)
    aggregation = _pick(args.aggregation, config.loss_aggregation)
    records, _ = read_dataset(args.input)
    if not records:
        raise ValueError(f"no records in {args.input}")
    unlabeled = [f"{r.video_id}/{r.query_id}" for r in records if r.label is None]
    if unlabeled:
        raise ValueError(f"records without labels (run convert first): {unlabeled}")
    records = sorted(records, key=DatasetRecord.sort_key)

    groups: dict[int, list[DatasetRecord]] = {}
    for rec in records:
        groups.setdefault(rec.timeline().num_clips, []).append(rec)

    predictions = []
    trace = []
    for num_clips in sorted(groups):
        members = groups[num_clips]
        gt = [
            GroundTruthRecord(r.video_id, r.timeline(), r.query, r.label, r.source_kind)
            for r in members
        ]
        result = overfit(
            gt,
            weights=config.weights(),
            steps=steps,
            learning_rate=learning_rate,
            rng_seed=seed,
            embed_dim=embed_dim,
            aggregation=aggregation,
        )
        for rec, pred in zip(members, result.predictions):
            predictions.append(
                PredictionRecord(rec.video_id, rec.query_id, rec.duration, rec.clip_len, pred)
            )
        trace.append(
            {
                "num_clips": num_clips,
                "items": [[r.video_id, r.query_id] for r in members],
                "positives": result.positives.tolist(),
                "initial_loss": float(result.trajectory[0]),
                "final_loss": float(result.trajectory[-1]),
                "trajectory": result.trajectory.tolist(),
            }
        )
    write_predictions(predictions, args.output)
    if args.trajectory:
        write_json_report({"seed": seed, "steps": steps, "groups": trace}, args.trajectory)
    for group in trace:
        print(
            f"fit {len(group['items'])} record(s) at {group['num_clips']} clips: "
            f"loss {group['initial_loss']:.6f} -> {group['final_loss']:.6f}"
        )
    return 0


def _decode_moments_result(rec: PredictionRecord, config: RunConfig, args) -> dict:
    iou = _pick(args.iou_threshold, config.nms_iou_threshold)
    top_k = _pick(args.top_k, config.moment_top_k)
    use_sal = config.moment_use_saliency if args.use_saliency is None else args.use_saliency
    moments = decode_moments(
        rec.prediction, rec.timeline(), iou_threshold=iou, top_k=top_k, use_saliency=use_sal
    )
    return {
        "moments": [
            {"start": m.interval.start, "end": m.interval.end, "score": m.score}
            for m in moments
        ]
    }


def _decode_highlights_result(rec: PredictionRecord, config: RunConfig, args) -> dict:
    mode = _pick(args.mode, config.highlight_mode)
    k = _pick(args.top_k, config.highlight_top_k)
    top = decode_highlights(rec.prediction, mode=mode, k=k)
    return {
        "top_clips": [int(i) for i in top],
        "clip_scores": highlight_scores(rec.prediction, mode).tolist(),
    }


def _cmd_decode(args) -> int:
    config = _load_config(args)
    records, _ = read_predictions(args.input)
    if not records:
        raise ValueError(f"no prediction records in {args.input}")
    records = sorted(records, key=PredictionRecord.sort_key)

    features = None
    if args.task == "summary":
        if not args.kts_input:
            raise ValueError("task 'summary' needs --kts-input with per-clip features")
        features = {m.video_id: m for m in read_matrices(args.kts_input)}

    results = []
    for rec in records:
        entry = {"video_id": rec.video_id, "query_id": rec.query_id}
        if args.task == "moments":
            entry.update(_decode_moments_result(rec, config, args))
        elif args.task == "highlights":
            entry.update(_decode_highlights_result(rec, config, args))
        else:
            if rec.video_id not in features:
                raise ValueError(f"--kts-input has no features for video {rec.video_id!r}")
            matrix = features[rec.video_id]
            if matrix.values.shape[0] != rec.timeline().num_clips:
                raise ValueError(
                    f"features for {rec.video_id!r} cover {matrix.values.shape[0]} clips "
                    f"but the prediction has {rec.timeline().num_clips}"
                )
            segments = kts_segment(
                features=matrix.values,
                max_segments=_pick(args.max_segments, config.kts_max_segments),
                max_clips=_pick(args.max_clips, config.kts_max_clips),
                penalty=_pick(args.kts_penalty, config.kts_penalty),
            )
            selection = decode_summary(
                rec.prediction,
                segments,
                budget_fraction=_pick(args.budget_fraction, config.summary_budget_fraction),
                segment_aggregate=_pick(
                    args.segment_aggregate, config.summary_segment_aggregate
                ),
            )
            entry.update(
                {
                    "selected_clips": list(selection.clips),
                    "change_points": list(segments.change_points),
                    "segment_scores": list(selection.segment_scores),
                }
            )
        results.append(entry)
    write_json_report({"task": args.task, "results": results}, args.output)
    print(f"decoded {len(results)} record(s) for task {args.task!r} to {args.output}")
    return 0


def _match_results(results: list, truth: dict) -> list:
    """Pair each decoded result with its truth record; mismatches are errors."""
    got = {(r["video_id"], r["query_id"]) for r in results}
    want = set(truth)
    if got != want:
        missing = sorted(want - got)
        extra = sorted(got - want)
        parts = []
        if missing:
            parts.append(f"truth records without predictions: {missing}")
        if extra:
            parts.append(f"predictions without truth records: {extra}")
        raise ValueError("; ".join(parts))
    return [(r, truth[(r["video_id"], r["query_id"])]) for r in results]


def _eval_moments(pairs, config: RunConfig, args) -> dict:
    k = _pick(args.recall_k, config.recall_k)
    items = []
    for result, rec in pairs:
        timeline = rec.timeline()
        preds = tuple(
            ScoredInterval(Interval(m["start"], m["end"]), m["score"])
            for m in result["moments"]
        )
        gts = tuple(intervals_of(timeline, rec.label))
        items.append(MomentEvalItem(f"{rec.video_id}/{rec.query_id}", preds, gts))
    recall = recall_at_k(items, k=k, thresholds=config.recall_iou_thresholds)
    detail = moment_map(items, thresholds=config.map_iou_thresholds)
    return {
        "num_items": len(items),
        "recall_k": k,
        "recall": {_tkey(t): v for t, v in recall.recall.items()},
        "miou": recall.miou,
        "map_per_threshold": {_tkey(t): v for t, v in detail["map_per_threshold"].items()},
        "average_map": detail["average_map"],
    }


def _eval_highlights(pairs, config: RunConfig, args) -> dict:
    items = []
    for result, rec in pairs:
        items.append(
            HighlightEvalItem(
                f"{rec.video_id}/{rec.query_id}",
                np.asarray(result["clip_scores"], dtype=np.float64),
                rec.label.foreground,
            )
        )
    excluded = sum(1 for item in items if item.num_positives == 0)
    t5 = top5_map(items)
    return {
        "num_items": len(items),
        "highlight_map": highlight_map(items),
        "top5_map": t5["top5_map"],
        "top5_protocol": t5["protocol"],
        "hit_at_1": hit_at_1(items),
        "hit_at_1_excluded": excluded,
    }


def _eval_summary(pairs, config: RunConfig, args) -> dict:
    per_item = []
    for result, rec in pairs:
        if rec.clip_concepts is None:
            raise ValueError(
                f"truth record {rec.video_id}/{rec.query_id} has no clip_concepts; "
                "summary evaluation needs per-clip concept sets"
            )
        concepts = {i: cs for i, cs in enumerate(rec.clip_concepts)}
        item = SummaryEvalItem(
            tuple(result["selected_clips"]),
            tuple(int(i) for i in rec.label.foreground_indices),
            concepts,
        )
        score = qfvs_f1(item)
        per_item.append(
            {
                "video_id": rec.video_id,
                "query_id": rec.query_id,
                "precision": score.precision,
                "recall": score.recall,
                "f1": score.f1,
            }
        )
    return {
        "num_items": len(per_item),
        "precision": float(np.mean([e["precision"] for e in per_item])),
        "recall": float(np.mean([e["recall"] for e in per_item])),
        "f1": float(np.mean([e["f1"] for e in per_item])),
        "per_item": per_item,
    }


def _cmd_eval(args) -> int:
    config = _load_config(args)
    with open(args.predictions, "r", encoding="utf-8") as handle:
        decoded = json.load(handle)
    if decoded.get("task") != args.task:
        raise ValueError(
            f"predictions were decoded for task {decoded.get('task')!r}, not {args.task!r}"
        )
    truth_records, _ = read_dataset(args.truth)
    unlabeled = [f"{r.video_id}/{r.query_id}" for r in truth_records if r.label is None]
    if unlabeled:
        raise ValueError(f"truth records without labels: {unlabeled}")
    truth = {(r.video_id, r.query_id): r for r in truth_records}
    if len(truth) != len(truth_records):
        raise ValueError("duplicate (video_id, query_id) pairs in the truth file")
    results = sorted(decoded["results"], key=lambda r: (r["video_id"], r["query_id"]))
    pairs = _match_results(results, truth)

    if args.task == "moments":
        body = _eval_moments(pairs, config, args)
    elif args.task == "highlights":
        body = _eval_highlights(pairs, config, args)
    else:
        body = _eval_summary(pairs, config, args)
    report = {"task": args.task, **body}
    write_json_report(report, args.output)
    headline = {
        "moments": lambda b: f"mIoU {b['miou']:.4f}, avg mAP {b['average_map']:.4f}",
        "highlights": lambda b: f"mAP {b['highlight_map']:.4f}, HIT@1 {b['hit_at_1']:.4f}",
        "summary": lambda b: f"F1 {b['f1']:.4f}",
    }[args.task](body)
    print(f"evaluated {body['num_items']} item(s): {headline}")
    return 0


def _add_common(sub) -> None:
    sub.add_argument("--config", help="RunConfig JSON; flags override its values")
    sub.add_argument("--output", required=True, help="output file path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tgkit",
        description="Temporal grounding toolkit: label conversion, losses, decoding, metrics.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("convert", help="attach unified labels to raw annotations")
    _add_common(p)
    p.add_argument("--input", required=True, help="dataset JSONL with raw annotations")
    p.add_argument("--bin-width", type=float, default=None, help="curve quantisation bin")
    p.add_argument(
        "--on-error", choices=("raise", "skip"), default="raise",
        help="skip malformed lines instead of failing",
    )
    p.set_defaults(func=_cmd_convert)

    p = commands.add_parser("teacher", help="pseudo-labels from concept similarity matrices")
    _add_common(p)
    p.add_argument("--input", required=True, help="matrix container (text or binary)")
    p.add_argument("--top-k", type=int, default=None, help="concepts per video")
    p.add_argument("--bin-width", type=float, default=None, help="curve quantisation bin")
    p.set_defaults(func=_cmd_teacher)

    p = commands.add_parser("losscheck", help="finite-difference audit of loss gradients")
    _add_common(p)
    p.add_argument("--losses", default=None, help="comma-separated loss names (default: all)")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--points", type=int, default=None, help="random points per loss")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_losscheck)

    p = commands.add_parser("fit", help="overfit free parameters to labeled records")
    _add_common(p)
    p.add_argument("--input", required=True, help="labeled dataset JSONL")
    p.add_argument("--trajectory", default=None, help="also write the loss trajectory here")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--embed-dim", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--aggregation", choices=("per_video", "per_clip"), default=None)
    p.set_defaults(func=_cmd_fit)

    p = commands.add_parser("decode", help="turn predictions into task outputs")
    _add_common(p)
    p.add_argument("--input", required=True, help="predictions JSONL")
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--iou-threshold", type=float, default=None, help="NMS threshold (moments)")
    p.add_argument("--top-k", type=int, default=None, help="ranked outputs to keep")
    p.add_argument(
        "--use-saliency", action="store_true", default=None,
        help="add saliency to moment scores",
    )
    p.add_argument("--mode", choices=("f_plus_s", "f_only"), default=None,
                   help="highlight score mode")
    p.add_argument("--kts-input", default=None, help="per-clip feature matrices (summary)")
    p.add_argument("--kts-penalty", type=float, default=None)
    p.add_argument("--max-segments", type=int, default=None)
    p.add_argument("--max-clips", type=int, default=None)
    p.add_argument("--budget-fraction", type=float, default=None)
    p.add_argument("--segment-aggregate", choices=("mean", "max"), default=None)
    p.set_defaults(func=_cmd_decode)

    p = commands.add_parser("eval", help="score decoded outputs against labeled truth")
    _add_common(p)
    p.add_argument("--predictions", required=True, help="decode output JSON")
    p.add_argument("--truth", required=True, help="labeled dataset JSONL")
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--recall-k", type=int, default=None, help="k for Recall@k (moments)")
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _check_thread_env()
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
