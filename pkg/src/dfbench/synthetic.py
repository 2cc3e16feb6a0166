"""Synthetic blob corpus for sanity checks and end-to-end smoke runs.

Real clips show a bright Gaussian blob on a dark noisy background, fake
clips a dark blob on a bright background; the classes are separable by any
reasonable detector after a short overfit run. Fake clips cycle through the
face-swap / lip-sync method tags so per-method false-negative attribution
has something to group by.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .data import ArrayDataset

FAKE_METHODS = ("facefusion", "facefusion_gan", "retalking", "wav2lip")


def blob_image(rng: np.random.Generator, size: int, bright: bool) -> np.ndarray:
    """One (3, size, size) float32 image in [0, 1]."""
    if bright:
        img = rng.uniform(0.0, 0.25, size=(3, size, size))
        peak = 0.95
    else:
        img = rng.uniform(0.75, 1.0, size=(3, size, size))
        peak = -0.95
    cy, cx = rng.uniform(0.3 * size, 0.7 * size, size=2)
    sigma = size / 4.0
    yy, xx = np.mgrid[0:size, 0:size]
    blob = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2)))
    img = img + peak * blob[None, :, :]
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def blob_dataset(n: int, size: int = 56, seed: int = 0) -> ArrayDataset:
    """Balanced in-memory set of n images: even indices real, odd fake."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for i in range(n):
        label = i % 2  # 0 real (bright), 1 fake (dark)
        images.append(blob_image(rng, size, bright=(label == 0)))
        labels.append(label)
    return ArrayDataset(images, labels)


def make_corpus(
    out_dir: str | Path,
    n_clips: int = 40,
    frames_per_clip: int = 10,
    size: int = 56,
    seed: int = 0,
) -> Path:
    """Write a labeled frame-folder tree consumable by the preprocess step.

    Layout: out_dir/<method>/<clip>/frame_NNN.png with method "original" for
    real clips; half the clips are real, half fake.
    """
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    for i in range(n_clips):
        is_fake = i % 2 == 1
        method = FAKE_METHODS[(i // 2) % len(FAKE_METHODS)] if is_fake else "original"
        clip_dir = out_dir / method / f"clip{i:03d}"
        clip_dir.mkdir(parents=True, exist_ok=True)
        for f in range(frames_per_clip):
            image = blob_image(rng, size, bright=not is_fake)
            hwc = (image.transpose(1, 2, 0) * 255.0).round().astype(np.uint8)
            bgr = cv2.cvtColor(hwc, cv2.COLOR_RGB2BGR)
            cv2.imwrite(str(clip_dir / f"frame_{f:03d}.png"), bgr)
    return out_dir
