#!/usr/bin/env python3
"""Generate the synthetic blob corpus used by the desk-scale benchmark runs.

Writes out_dir/<method>/<clip>/frame_NNN.png with half the clips real
("original") and half fake (cycling through the face-swap / lip-sync method
tags), ready for `dfbench preprocess`.
"""

import argparse

from dfbench.synthetic import make_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir")
    parser.add_argument("--clips", type=int, default=40)
    parser.add_argument("--frames-per-clip", type=int, default=10)
    parser.add_argument("--size", type=int, default=56)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    make_corpus(
        args.out_dir,
        n_clips=args.clips,
        frames_per_clip=args.frames_per_clip,
        size=args.size,
        seed=args.seed,
    )
    print(f"wrote {args.clips} clips x {args.frames_per_clip} frames to {args.out_dir}")


if __name__ == "__main__":
    main()
