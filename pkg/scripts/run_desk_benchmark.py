#!/usr/bin/env python3
"""End-to-end desk-scale benchmark: corpus -> preprocess -> train -> predict
-> comparison table.

Trains each requested model for a couple of epochs on the synthetic blob
corpus at the 56-pixel desk preset, scores the test split, and writes
per-model reports plus an AUC-sorted comparison table under the run
directory. Everything is seeded and CPU-sized.
"""

import argparse
import sys
from pathlib import Path

from dfbench.cli import main as dfbench
from dfbench.synthetic import make_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--run-dir", default="runs/desk_benchmark")
    parser.add_argument("--models", nargs="+",
                        default=["genconvit_ae", "genconvit_vae", "meso4", "spsl"])
    parser.add_argument("--clips", type=int, default=40)
    parser.add_argument("--frames-per-clip", type=int, default=10)
    parser.add_argument("--epochs", default="8")
    parser.add_argument("--frames", type=int, default=5, help="frames per clip at predict time")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    corpus = run_dir / "corpus"
    if not corpus.exists():
        make_corpus(corpus, n_clips=args.clips, frames_per_clip=args.frames_per_clip,
                    size=56, seed=args.seed)
    manifest = run_dir / "manifest.jsonl"
    rc = dfbench([
        "preprocess", str(corpus), "--out", str(manifest),
        "--split", "60,20,20", "--seed", str(args.seed),
    ])
    if rc:
        return rc

    bench_args = ["benchmark", "--out", str(run_dir / "bench")]
    final_epoch = max(int(e) for e in args.epochs.split(","))
    for model in args.models:
        train_dir = run_dir / f"train_{model}"
        rc = dfbench([
            "train", "--manifest", str(manifest), "--model", model,
            "--out", str(train_dir), "--epochs", args.epochs,
            "--image-size", "56", "--seed", str(args.seed),
        ])
        if rc:
            return rc
        dump = run_dir / f"{model}.predictions.jsonl"
        rc = dfbench([
            "predict", "--manifest", str(manifest),
            "--checkpoint", str(train_dir / f"{model}_epoch{final_epoch}.ckpt"),
            "--out", str(dump), "--frames", str(args.frames),
            "--seed", str(args.seed),
        ])
        if rc:
            return rc
        bench_args += ["--dump", f"{model}={dump}"]

    return dfbench(bench_args)


if __name__ == "__main__":
    sys.exit(main())
