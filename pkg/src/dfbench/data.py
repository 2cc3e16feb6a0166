"""Dataset manifests, splits, frame sampling and image loading.

A manifest is a UTF-8 line-delimited file: the first line is a JSON header
(format name, version, frame root, optional split spec echo) and every
following line is one JSON sample record with fixed field order
(sample_id, frames, label, method, split). Frame paths are relative to the
declared root.

Real samples always carry the method tag "original"; fake samples carry the
tag of the manipulation that produced them (e.g. "retalking", "wav2lip").
"""

from __future__ import annotations

import dataclasses
import json
import os
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import cv2
import numpy as np

from .augment import AugmentationConfig, augment

REAL, FAKE = "real", "fake"
ORIGINAL_METHOD = "original"
SPLITS = ("train", "val", "test")
UNASSIGNED = "unassigned"

MANIFEST_FORMAT = "dfbench-manifest"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class ManifestEntry:
    """One labeled clip: an ordered frame sequence plus metadata."""

    sample_id: str
    frames: tuple[str, ...]
    label: str
    method: str
    split: str = UNASSIGNED

    def __post_init__(self) -> None:
        if not self.sample_id:
            raise ValueError("sample_id must be non-empty")
        if not self.frames:
            raise ValueError(f"entry {self.sample_id!r}: frames must be non-empty")
        if self.label not in (REAL, FAKE):
            raise ValueError(
                f"entry {self.sample_id!r}: label must be 'real' or 'fake', got {self.label!r}"
            )
        if self.label == REAL and self.method != ORIGINAL_METHOD:
            raise ValueError(
                f"entry {self.sample_id!r}: real entries must use method "
                f"{ORIGINAL_METHOD!r}, got {self.method!r}"
            )
        if self.split not in SPLITS + (UNASSIGNED,):
            raise ValueError(f"entry {self.sample_id!r}: unknown split {self.split!r}")


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    meta: dict = field(default_factory=dict)

    @property
    def root(self) -> str:
        return self.meta.get("root", ".")

    def frame_path(self, base_dir: str | Path, rel: str) -> Path:
        return Path(base_dir) / self.root / rel

    def of_split(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]


@dataclass(frozen=True)
class SplitSpec:
    """Train/val/test fractions (must sum to 1) plus the shuffling seed."""

    train: float
    val: float
    test: float
    seed: int = 0

    def __post_init__(self) -> None:
        for name, frac in (("train", self.train), ("val", self.val), ("test", self.test)):
            if frac < 0.0:
                raise ValueError(f"{name} fraction must be >= 0, got {frac}")
        total = self.train + self.val + self.test
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {total}")


def write_manifest(
    path: str | Path, entries: Sequence[ManifestEntry], meta: dict | None = None
) -> None:
    header = {"format": MANIFEST_FORMAT, "version": MANIFEST_VERSION}
    header.update(meta or {})
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for e in entries:
            row = {
                "sample_id": e.sample_id,
                "frames": list(e.frames),
                "label": e.label,
                "method": e.method,
                "split": e.split,
            }
            fh.write(json.dumps(row) + "\n")


def load_manifest(path: str | Path) -> Manifest:
    """Parse and validate a manifest file.

    Raises ValueError with the offending line number for parse errors,
    duplicate sample ids or invalid fields.
    """
    path = Path(path)
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    meta: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            if lineno == 1 and row.get("format") == MANIFEST_FORMAT:
                if row.get("version") != MANIFEST_VERSION:
                    raise ValueError(
                        f"{path}:1: unsupported manifest version {row.get('version')!r}"
                    )
                meta = row
                continue
            try:
                entry = ManifestEntry(
                    sample_id=row["sample_id"],
                    frames=tuple(row["frames"]),
                    label=row["label"],
                    method=row.get("method", ORIGINAL_METHOD),
                    split=row.get("split", UNASSIGNED),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: invalid entry: {exc}") from exc
            if entry.sample_id in seen:
                raise ValueError(
                    f"{path}:{lineno}: duplicate sample_id {entry.sample_id!r}"
                )
            seen.add(entry.sample_id)
            entries.append(entry)
    return Manifest(entries=entries, meta=meta)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


def _stratified_quota(quota: int, group_size: int, total: int, available: int) -> int:
    ideal = quota * group_size / total
    return max(0, min(available, round(ideal)))


def split_dataset(
    entries: Sequence[ManifestEntry], spec: SplitSpec
) -> list[ManifestEntry]:
    """Assign every entry to exactly one of train/val/test.

    Per-split totals are round(fraction * N) with any rounding remainder going
    to train; the assignment is stratified by label and fully determined by
    spec.seed. Input entries must all be unassigned.
    """
    assigned = [e.sample_id for e in entries if e.split != UNASSIGNED]
    if assigned:
        raise ValueError(f"entries already assigned to splits: {assigned[:5]}")
    n = len(entries)
    n_test = round(spec.test * n)
    n_val = round(spec.val * n)

    rng = np.random.default_rng(spec.seed)
    by_label: dict[str, list[int]] = {REAL: [], FAKE: []}
    for i, e in enumerate(entries):
        by_label[e.label].append(i)
    for idxs in by_label.values():
        rng.shuffle(idxs)

    split_of: dict[int, str] = {}
    cursors = {label: 0 for label in by_label}
    for split_name, quota in (("test", n_test), ("val", n_val)):
        taken = 0
        labels = sorted(by_label, key=lambda lb: len(by_label[lb]), reverse=True)
        for pos, label in enumerate(labels):
            idxs = by_label[label]
            available = len(idxs) - cursors[label]
            if pos == len(labels) - 1:
                want = quota - taken  # last group absorbs rounding
            else:
                want = _stratified_quota(quota, len(idxs), n, available)
            want = max(0, min(available, want))
            for k in range(want):
                split_of[idxs[cursors[label] + k]] = split_name
            cursors[label] += want
            taken += want
    out = []
    for i, e in enumerate(entries):
        out.append(dataclasses.replace(e, split=split_of.get(i, "train")))
    return out


# ---------------------------------------------------------------------------
# Frame sampling and image loading
# ---------------------------------------------------------------------------


def sample_frames(entry: ManifestEntry, k: int, seed: int = 0) -> list[str]:
    """Pick at most k frames, uniformly spaced over the clip, order preserved.

    Clips with <= k frames pass through untouched. Selection is uniform and
    deterministic, so the seed argument (kept for interface stability with
    other per-sample operations) does not influence the result.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n = len(entry.frames)
    if n <= k:
        return list(entry.frames)
    idx = np.round(np.linspace(0, n - 1, num=k)).astype(int)
    return [entry.frames[i] for i in idx]


def resize_normalize(image: str | Path | np.ndarray, target: int) -> np.ndarray:
    """Decode/resize to (3, target, target) float32 RGB scaled to [0, 1]."""
    if isinstance(image, (str, Path)):
        decoded = cv2.imread(str(image), cv2.IMREAD_COLOR)
        if decoded is None:
            raise ValueError(f"undecodable image file: {image}")
        decoded = cv2.cvtColor(decoded, cv2.COLOR_BGR2RGB)
    else:
        decoded = np.asarray(image)
        if decoded.ndim != 3 or decoded.shape[2] != 3:
            raise ValueError(f"expected HxWx3 image array, got shape {decoded.shape}")
    if decoded.dtype == np.uint8:
        decoded = decoded.astype(np.float32) / 255.0
    else:
        decoded = decoded.astype(np.float32)
    if decoded.shape[0] != target or decoded.shape[1] != target:
        decoded = cv2.resize(decoded, (target, target), interpolation=cv2.INTER_LINEAR)
    return np.clip(decoded.transpose(2, 0, 1), 0.0, 1.0)


# ---------------------------------------------------------------------------
# External face-detector adapter
# ---------------------------------------------------------------------------

# Manifests are expected to point at pre-cropped face frames. Users running
# their own face detector plug it in as a path-mapping callable: given a raw
# frame path it returns the path of the corresponding face crop.
FaceCropAdapter = Callable[[str], str]


def apply_crop_adapter(
    entries: Sequence[ManifestEntry], adapter: FaceCropAdapter
) -> list[ManifestEntry]:
    """Rewrite every frame path through an external face-crop adapter."""
    out = []
    for e in entries:
        out.append(
            dataclasses.replace(e, frames=tuple(adapter(f) for f in e.frames))
        )
    return out


# ---------------------------------------------------------------------------
# Anonymization
# ---------------------------------------------------------------------------


def anonymize_names(
    entries: Sequence[ManifestEntry], seed: int, map_path: str | Path
) -> list[ManifestEntry]:
    """Replace sample ids with 16-hex-char tokens; labels/methods untouched.

    The reversible (token, original_id) map is written atomically to
    map_path, one pair per line, tab separated.
    """
    rng = random.Random(seed)
    used: set[str] = set()
    out: list[ManifestEntry] = []
    pairs: list[tuple[str, str]] = []
    for e in entries:
        token = f"{rng.getrandbits(64):016x}"
        while token in used:
            token = f"{rng.getrandbits(64):016x}"
        used.add(token)
        pairs.append((token, e.sample_id))
        out.append(dataclasses.replace(e, sample_id=token))
    map_path = Path(map_path)
    tmp = map_path.with_suffix(map_path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for token, original in pairs:
            fh.write(f"{token}\t{original}\n")
    os.replace(tmp, map_path)
    return out


def read_anonymization_map(map_path: str | Path) -> dict[str, str]:
    mapping = {}
    with open(map_path, "r", encoding="utf-8") as fh:
        for line in fh:
            token, original = line.rstrip("\n").split("\t", 1)
            mapping[token] = original
    return mapping


# ---------------------------------------------------------------------------
# Stats
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetStats:
    total: int
    by_label: dict[str, int]
    by_method: dict[str, int]
    by_split: dict[str, int]


def compute_dataset_stats(entries: Sequence[ManifestEntry]) -> DatasetStats:
    by_label = {REAL: 0, FAKE: 0}
    by_method: dict[str, int] = {}
    by_split = {name: 0 for name in SPLITS + (UNASSIGNED,)}
    for e in entries:
        by_label[e.label] += 1
        by_method[e.method] = by_method.get(e.method, 0) + 1
        by_split[e.split] += 1
    return DatasetStats(
        total=len(entries), by_label=by_label, by_method=by_method, by_split=by_split
    )


# ---------------------------------------------------------------------------
# Training-facing datasets: sequences of (image CHW float32, label int)
# ---------------------------------------------------------------------------

LABEL_INDEX = {REAL: 0, FAKE: 1}


class ArrayDataset:
    """In-memory dataset over (image, label) pairs, mainly for synthetic sets."""

    def __init__(self, images: Sequence[np.ndarray], labels: Sequence[int]):
        if len(images) != len(labels):
            raise ValueError("images and labels length mismatch")
        self.images = [np.asarray(im, dtype=np.float32) for im in images]
        self.labels = [int(lb) for lb in labels]

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int) -> tuple[np.ndarray, int]:
        return self.images[i], self.labels[i]


class FrameDataset:
    """Frame-level view of manifest entries backed by image files on disk.

    Each item is one frame. Augmentation (when configured) derives its seed
    from (base seed, epoch, item index) so epochs see different but fully
    reproducible transforms; call set_epoch before each training epoch.
    """

    def __init__(
        self,
        entries: Sequence[ManifestEntry],
        base_dir: str | Path,
        image_size: int,
        root: str = ".",
        frames_per_clip: int | None = None,
        augmentation: AugmentationConfig | None = None,
        seed: int = 0,
    ):
        self.base_dir = Path(base_dir)
        self.root = root
        self.image_size = image_size
        self.augmentation = augmentation
        self.seed = seed
        self.epoch = 0
        self.index: list[tuple[str, int]] = []  # (frame path, label index)
        for e in entries:
            frames = (
                sample_frames(e, frames_per_clip) if frames_per_clip else list(e.frames)
            )
            for f in frames:
                self.index.append((f, LABEL_INDEX[e.label]))

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.index)

    def __getitem__(self, i: int) -> tuple[np.ndarray, int]:
        rel, label = self.index[i]
        image = resize_normalize(self.base_dir / self.root / rel, self.image_size)
        if self.augmentation is not None:
            item_seed = hash((self.seed, self.epoch, i)) & 0x7FFFFFFF
            image = augment(image, self.augmentation, seed=item_seed)
        return image, label
