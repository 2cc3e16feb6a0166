"""Clip-level scoring: frame sampling, per-frame probabilities, aggregation.

A clip's score is an aggregate of the fake-probabilities of up to k
uniformly sampled frames; the default aggregation is the arithmetic mean
(alternatives: max, majority voting). Per-sample wall latency covers frame
loading plus inference.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .data import Manifest, ManifestEntry, resize_normalize, sample_frames
from .genconvit import fake_probability
from .metrics import PredictionRecord

AGG_MODES = ("mean", "max", "majority")


def aggregate_scores(frame_scores: Sequence[float], agg: str = "mean") -> float:
    scores = np.asarray(frame_scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("no frame scores to aggregate")
    if agg == "mean":
        return float(scores.mean())
    if agg == "max":
        return float(scores.max())
    if agg == "majority":
        return float((scores >= 0.5).mean())
    raise ValueError(f"unknown aggregation {agg!r}; expected one of {AGG_MODES}")


def score_entry(
    model: torch.nn.Module,
    entry: ManifestEntry,
    frame_dir: Path,
    image_size: int,
    frames: int = 15,
    agg: str = "mean",
) -> tuple[float, list[float], float]:
    """Score one clip; returns (clip score, per-frame scores, latency seconds)."""
    t0 = time.perf_counter()
    picked = sample_frames(entry, frames)
    images = np.stack(
        [resize_normalize(frame_dir / rel, image_size) for rel in picked]
    )
    with torch.no_grad():
        output = model(torch.from_numpy(images))
        frame_scores = [float(p) for p in fake_probability(output)]
    score = aggregate_scores(frame_scores, agg)
    return score, frame_scores, time.perf_counter() - t0


def predict_manifest(
    model: torch.nn.Module,
    manifest: Manifest,
    manifest_dir: str | Path,
    image_size: int,
    split: str = "test",
    frames: int = 15,
    agg: str = "mean",
    frame_scores_path: Optional[str | Path] = None,
) -> list[PredictionRecord]:
    """Score every clip of a manifest split. The model is put in eval mode,
    so scores are deterministic for a fixed checkpoint."""
    entries = manifest.of_split(split)
    if not entries:
        raise ValueError(f"manifest has no entries in split {split!r}")
    frame_dir = Path(manifest_dir) / manifest.root
    model.eval()
    records = []
    frame_fh = open(frame_scores_path, "w", encoding="utf-8") if frame_scores_path else None
    try:
        for entry in entries:
            score, frame_scores, latency = score_entry(
                model, entry, frame_dir, image_size, frames=frames, agg=agg
            )
            records.append(
                PredictionRecord(
                    sample_id=entry.sample_id,
                    score=score,
                    true_label=entry.label,
                    method=entry.method,
                    latency_seconds=latency,
                )
            )
            if frame_fh:
                for i, fs in enumerate(frame_scores):
                    frame_fh.write(f"{entry.sample_id}\t{i}\t{fs!r}\n")
    finally:
        if frame_fh:
            frame_fh.close()
    return records
