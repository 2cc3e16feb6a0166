"""Command-line entry point: preprocess -> train -> predict -> benchmark.

Subcommands exit 0 on success and nonzero with a one-line diagnostic on
failure. All randomness flows from --seed (falling back to the DFBENCH_SEED
environment variable, then 0). A flat key=value config file can supply
defaults; explicit flags always win (flags > config file > defaults).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__
from .augment import AugmentationConfig
from .baselines import create_detector, registry_names
from .checkpoint import load_checkpoint, load_into
from .data import (
    ManifestEntry,
    SplitSpec,
    anonymize_names,
    compute_dataset_stats,
    FrameDataset,
    load_manifest,
    split_dataset,
    write_manifest,
)
from .metrics import (
    HEADLINE_METRICS,
    build_report,
    emit_report,
    read_records,
    write_records,
)
from .predict import AGG_MODES, predict_manifest
from .training import default_train_config, finetune

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


def _env_seed() -> int:
    try:
        return int(os.environ.get("DFBENCH_SEED", "0"))
    except ValueError:
        return 0


def _parse_split(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"--split needs three comma-separated values, got {text!r}")
    total = sum(parts)
    if abs(total - 100.0) < 1e-6:
        parts = [p / 100.0 for p in parts]
    elif abs(total - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1 (or 100), got {total}")
    return parts[0], parts[1], parts[2]


def _parse_epochs(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(","))


def _parse_named(pairs: list[str], what: str) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"{what} expects NAME=PATH, got {pair!r}")
        name, path = pair.split("=", 1)
        if name in out:
            raise ValueError(f"duplicate {what} name {name!r}")
        out[name] = path
    return out


def _load_config_file(path: str) -> dict[str, str]:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_preprocess(args: argparse.Namespace) -> int:
    input_dir = Path(args.input_dir)
    if not input_dir.is_dir():
        raise ValueError(f"input directory not found: {input_dir}")
    entries = []
    for method_dir in sorted(p for p in input_dir.iterdir() if p.is_dir()):
        method = method_dir.name
        label = "real" if method == "original" else "fake"
        for clip_dir in sorted(p for p in method_dir.iterdir() if p.is_dir()):
            frames = sorted(
                str(f.relative_to(input_dir))
                for f in clip_dir.iterdir()
                if f.suffix.lower() in IMAGE_EXTENSIONS
            )
            if not frames:
                continue
            entries.append(
                ManifestEntry(
                    sample_id=f"{method}_{clip_dir.name}",
                    frames=tuple(frames),
                    label=label,
                    method=method,
                )
            )
    if not entries:
        raise ValueError(f"no frame folders found under {input_dir}")
    fractions = _parse_split(args.split)
    spec = SplitSpec(*fractions, seed=args.seed)
    entries = split_dataset(entries, spec)
    if args.anonymize:
        map_path = args.map_out or str(Path(args.out).with_suffix(".map.tsv"))
        entries = anonymize_names(entries, seed=args.seed, map_path=map_path)
        print(f"anonymization map written to {map_path}")
    meta = {
        "root": str(input_dir.resolve()),
        "split": list(fractions),
        "seed": args.seed,
    }
    write_manifest(args.out, entries, meta)
    stats = compute_dataset_stats(entries)
    print(f"manifest written to {args.out}")
    print(f"entries: {stats.total}  labels: {stats.by_label}")
    print(f"methods: {stats.by_method}")
    print(f"splits: {stats.by_split}")
    return 0


def _augmentation_from_args(args: argparse.Namespace) -> AugmentationConfig | None:
    if getattr(args, "no_augment", False):
        return None
    return AugmentationConfig(rate=args.augment_rate)


def cmd_train(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    manifest_dir = Path(args.manifest).parent
    overrides = {
        "image_size": args.image_size,
        "epochs": _parse_epochs(args.epochs),
        "seed": args.seed,
        "augmentation": _augmentation_from_args(args),
        "checkpoint_out": args.out,
        "checkpoint_in": args.checkpoint_in,
    }
    if args.lr is not None:
        overrides["learning_rate"] = args.lr
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    cfg = default_train_config(args.model, **overrides)
    common = dict(
        base_dir=manifest_dir,
        root=manifest.root,
        image_size=cfg.image_size,
        frames_per_clip=args.frames or None,
        seed=cfg.seed,
    )
    train_set = FrameDataset(
        manifest.of_split("train"), augmentation=cfg.augmentation, **common
    )
    val_set = FrameDataset(manifest.of_split("val"), **common)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = finetune(cfg, train_set, val_set, log_path=out_dir / "train_log.jsonl")
    for stats in result.history:
        print(
            f"epoch {stats.epoch}: train_loss={stats.train_loss:.4f} "
            f"val_loss={stats.val_loss:.4f} val_acc={stats.val_acc:.4f} "
            f"({stats.wall_seconds:.1f}s)"
        )
    if result.diverged:
        raise RuntimeError("training diverged (non-finite loss); kept last good state")
    print(f"checkpoints: {', '.join(str(p) for p in result.saved_paths)}")
    return 0


def _model_from_checkpoint(path: str, model_name: str | None, image_size: int | None):
    ckpt = load_checkpoint(path)
    name = model_name or ckpt.config.get("model")
    size = image_size or ckpt.config.get("image_size")
    if not name or not size:
        raise ValueError(
            "checkpoint carries no model/image_size echo; pass --model and --image-size"
        )
    handle = create_detector(name, int(size))
    load_into(ckpt, handle.model)
    return handle.model, name, int(size)


def cmd_predict(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    model, name, size = _model_from_checkpoint(
        args.checkpoint, args.model, args.image_size
    )
    records = predict_manifest(
        model,
        manifest,
        Path(args.manifest).parent,
        image_size=size,
        split=args.split,
        frames=args.frames,
        agg=args.agg,
        frame_scores_path=args.frame_scores,
    )
    write_records(records, args.out)
    print(f"{len(records)} predictions ({name}) written to {args.out}")
    return 0


def _comparison_table(reports: list) -> str:
    reports = sorted(reports, key=lambda r: (-r.auc, r.model))
    headers = ["model"] + list(HEADLINE_METRICS)
    rows = [headers]
    for rep in reports:
        rows.append([rep.model] + [f"{getattr(rep, m):.6f}" for m in HEADLINE_METRICS])
    widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
    lines = []
    for r, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
        if r == 0:
            lines.append("  ".join("-" * widths[i] for i in range(len(headers))))
    return "\n".join(lines) + "\n"


def _check_threshold(threshold: float) -> None:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")


def cmd_benchmark(args: argparse.Namespace) -> int:
    _check_threshold(args.threshold)
    dumps = _parse_named(args.dump or [], "--dump")
    checkpoints = _parse_named(args.checkpoint or [], "--checkpoint")
    if not dumps and not checkpoints:
        raise ValueError("benchmark needs at least one --dump NAME=PATH or --checkpoint NAME=PATH")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if checkpoints:
        if not args.manifest:
            raise ValueError("--checkpoint runs need --manifest to predict from")
        manifest = load_manifest(args.manifest)
        for name, ckpt_path in checkpoints.items():
            model, _, size = _model_from_checkpoint(ckpt_path, None, args.image_size)
            records = predict_manifest(
                model,
                manifest,
                Path(args.manifest).parent,
                image_size=size,
                split=args.split,
                frames=args.frames,
                agg=args.agg,
            )
            dump_path = out_dir / f"{name}.predictions.jsonl"
            write_records(records, dump_path)
            dumps[name] = str(dump_path)
    reports = []
    for name in sorted(dumps):
        records = read_records(dumps[name])
        report = build_report(records, model=name, threshold=args.threshold)
        emit_report(report, out_dir / name)
        reports.append(report)
    table = _comparison_table(reports)
    (out_dir / "comparison.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    print(f"reports under {out_dir}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    _check_threshold(args.threshold)
    records = read_records(args.dump)
    report = build_report(records, model=args.model, threshold=args.threshold)
    paths = emit_report(report, args.out)
    print(f"report written to {paths['report']}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dfbench",
        description="Benchmark deepfake detectors: preprocess, train, predict, compare.",
    )
    parser.add_argument("--version", action="version", version=f"dfbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=_env_seed(),
                       help="global seed (default: DFBENCH_SEED env var or 0)")
        p.add_argument("--config", default=None,
                       help="flat key=value file supplying defaults for this subcommand")

    p = sub.add_parser("preprocess", help="index a labeled frame-folder tree into a manifest")
    p.add_argument("input_dir", help="directory of <method>/<clip>/*.png frame folders")
    p.add_argument("--out", required=True, help="manifest path to write")
    p.add_argument("--split", default="80,15,5", help="train,val,test percentages or fractions")
    p.add_argument("--anonymize", action="store_true", help="replace sample ids with hex tokens")
    p.add_argument("--map-out", default=None, help="anonymization map path")
    add_common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="fine-tune a registered detector on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True, choices=registry_names())
    p.add_argument("--out", required=True, help="directory for checkpoints and the epoch log")
    p.add_argument("--epochs", default="10", help="comma-separated snapshot epochs, e.g. 4,5,8,10")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--image-size", type=int, default=56)
    p.add_argument("--frames", type=int, default=0,
                   help="max frames per clip used for training (0 = all)")
    p.add_argument("--checkpoint-in", default=None, help="warm-start weights")
    p.add_argument("--augment-rate", type=float, default=0.9)
    p.add_argument("--no-augment", action="store_true")
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a manifest split with a trained checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--model", default=None, choices=registry_names())
    p.add_argument("--image-size", type=int, default=None)
    p.add_argument("--out", required=True, help="prediction dump path (JSON lines)")
    p.add_argument("--split", default="test")
    p.add_argument("--frames", type=int, default=15, help="max frames sampled per clip")
    p.add_argument("--agg", default="mean", choices=AGG_MODES)
    p.add_argument("--frame-scores", default=None, help="optional per-frame score dump")
    add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", help="compare models from prediction dumps or checkpoints")
    p.add_argument("--dump", action="append", metavar="NAME=PATH",
                   help="existing prediction dump (repeatable)")
    p.add_argument("--checkpoint", action="append", metavar="NAME=PATH",
                   help="checkpoint to predict with first (repeatable; needs --manifest)")
    p.add_argument("--manifest", default=None)
    p.add_argument("--image-size", type=int, default=None)
    p.add_argument("--split", default="test")
    p.add_argument("--frames", type=int, default=15)
    p.add_argument("--agg", default="mean", choices=AGG_MODES)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True, help="directory for per-model reports and the table")
    add_common(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="emit a full metrics report for one prediction dump")
    p.add_argument("--dump", required=True)
    p.add_argument("--model", default="model", help="model name recorded in the report")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Inject config-file values as subparser defaults (flags still win)."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        return argv
    values = _load_config_file(argv[idx + 1])
    # find the active subparser and set typed defaults on it
    for action in parser._subparsers._group_actions:  # noqa: SLF001
        for name, sub in action.choices.items():
            if name in argv:
                typed = {}
                for act in sub._actions:  # noqa: SLF001
                    if act.dest in values:
                        raw = values[act.dest]
                        typed[act.dest] = act.type(raw) if act.type else raw
                sub.set_defaults(**typed)
    return argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"dfbench error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
