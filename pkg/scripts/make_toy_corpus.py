#!/usr/bin/env python3
"""Generate the synthetic toy corpus used by the end-to-end pipeline.

Writes a raw interval-annotated dataset (labels stripped, so `tgkit convert`
has work to do) plus concept similarity matrices in both container formats.
"""
import argparse
from pathlib import Path

from tgkit.formats import write_dataset, write_matrices_binary, write_matrices_text
from tgkit.synth import toy_corpus, toy_similarity


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="toy_data", help="output directory")
    parser.add_argument("--videos", type=int, default=3)
    parser.add_argument("--clips", type=int, default=40)
    parser.add_argument("--clip-len", type=float, default=2.0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    records = toy_corpus(args.videos, args.clips, args.clip_len, args.seed)
    for record in records:
        record.label = None
    write_dataset(records, out / "raw.jsonl")

    matrices = toy_similarity(
        num_videos=args.videos,
        num_clips=args.clips,
        clip_len=args.clip_len,
        seed=args.seed,
    )
    write_matrices_text(matrices, out / "similarity.txt")
    write_matrices_binary(matrices, out / "similarity.tgmx")
    print(f"wrote {len(records)} raw record(s) and {len(matrices)} matrices to {out}/")


if __name__ == "__main__":
    main()
