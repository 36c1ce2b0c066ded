#!/usr/bin/env python3
"""Drive the whole CLI pipeline on the toy corpus and print the reports.

Equivalent to running by hand:
    tgkit convert -> tgkit fit -> tgkit decode -> tgkit eval
for the moments and highlights tasks, plus a gradient audit.
"""
import argparse
import json
import subprocess
import sys
from pathlib import Path

from tgkit.formats import write_dataset
from tgkit.synth import toy_corpus


def run(*cmd) -> None:
    printable = " ".join(str(c) for c in cmd)
    print(f"$ {printable}")
    result = subprocess.run([str(c) for c in cmd])
    if result.returncode != 0:
        sys.exit(result.returncode)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--work-dir", default="toy_run", help="scratch directory")
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    work = Path(args.work_dir)
    work.mkdir(parents=True, exist_ok=True)

    records = toy_corpus(seed=args.seed)
    for record in records:
        record.label = None
    raw = work / "raw.jsonl"
    write_dataset(records, raw)

    labeled = work / "labeled.jsonl"
    preds = work / "preds.jsonl"
    run("tgkit", "convert", "--input", raw, "--output", labeled)
    run("tgkit", "losscheck", "--output", work / "losscheck.json",
        "--points", "25", "--seed", args.seed)
    run("tgkit", "fit", "--input", labeled, "--output", preds,
        "--trajectory", work / "trajectory.json",
        "--steps", args.steps, "--seed", args.seed)
    for task in ("moments", "highlights"):
        decoded = work / f"decoded_{task}.json"
        report = work / f"eval_{task}.json"
        run("tgkit", "decode", "--input", preds, "--task", task, "--output", decoded)
        run("tgkit", "eval", "--task", task, "--predictions", decoded,
            "--truth", labeled, "--output", report)
        print(json.dumps(json.loads(report.read_text()), indent=2))


if __name__ == "__main__":
    main()
