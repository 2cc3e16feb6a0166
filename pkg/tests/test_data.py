"""Manifest, split, frame-sampling and anonymization tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dfbench import data as D


def entry(i, label="fake", method="wav2lip", n_frames=5, split=D.UNASSIGNED):
    if label == "real":
        method = "original"
    return D.ManifestEntry(
        sample_id=f"clip{i:04d}",
        frames=tuple(f"{method}/clip{i:04d}/f{j}.png" for j in range(n_frames)),
        label=label,
        method=method,
        split=split,
    )


def mixed_entries(n, fake_fraction=0.5):
    out = []
    n_fake = int(round(n * fake_fraction))
    for i in range(n):
        label = "fake" if i < n_fake else "real"
        out.append(entry(i, label=label))
    return out


# ---------------------------------------------------------------------------
# Manifest IO
# ---------------------------------------------------------------------------


def test_entry_validation():
    with pytest.raises(ValueError):
        D.ManifestEntry("x", (), "fake", "wav2lip")
    with pytest.raises(ValueError):
        D.ManifestEntry("x", ("f.png",), "unknown", "wav2lip")
    with pytest.raises(ValueError):
        D.ManifestEntry("x", ("f.png",), "real", "wav2lip")  # real must be original
    with pytest.raises(ValueError):
        D.ManifestEntry("x", ("f.png",), "fake", "wav2lip", split="nope")


def test_manifest_roundtrip(tmp_path):
    entries = [entry(0), entry(1, label="real"), entry(2, method="retalking")]
    path = tmp_path / "manifest.jsonl"
    D.write_manifest(path, entries, meta={"root": "frames", "split": [0.8, 0.15, 0.05]})
    manifest = D.load_manifest(path)
    assert len(manifest.entries) == 3
    assert manifest.entries == entries
    assert manifest.root == "frames"
    assert manifest.meta["split"] == [0.8, 0.15, 0.05]


def test_manifest_duplicate_id(tmp_path):
    path = tmp_path / "manifest.jsonl"
    e = entry(7)
    D.write_manifest(path, [e], meta={})
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(
            '{"sample_id": "clip0007", "frames": ["f.png"], "label": "fake", '
            '"method": "wav2lip", "split": "unassigned"}\n'
        )
    with pytest.raises(ValueError, match="clip0007"):
        D.load_manifest(path)


def test_manifest_bad_label_and_parse_error(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text(
        '{"sample_id": "a", "frames": ["f.png"], "label": "unknown", "method": "m"}\n'
    )
    with pytest.raises(ValueError, match="m.jsonl:1"):
        D.load_manifest(path)
    path.write_text("not json at all\n")
    with pytest.raises(ValueError, match="m.jsonl:1"):
        D.load_manifest(path)


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def split_counts(entries):
    stats = D.compute_dataset_stats(entries)
    return (
        stats.by_split["train"],
        stats.by_split["val"],
        stats.by_split["test"],
    )


def test_split_spec_validation():
    with pytest.raises(ValueError):
        D.SplitSpec(0.5, 0.2, 0.2)
    with pytest.raises(ValueError):
        D.SplitSpec(1.2, -0.1, -0.1)
    D.SplitSpec(0.8, 0.15, 0.05)


def test_split_proportions_80_15_5():
    entries = mixed_entries(1000)
    out = D.split_dataset(entries, D.SplitSpec(0.80, 0.15, 0.05, seed=1))
    assert split_counts(out) == (800, 150, 50)


def test_split_proportions_87_10_3():
    entries = mixed_entries(1000)
    out = D.split_dataset(entries, D.SplitSpec(0.87, 0.10, 0.03, seed=1))
    assert split_counts(out) == (870, 100, 30)


def test_split_deterministic_and_partition():
    entries = mixed_entries(300, fake_fraction=0.4)
    spec = D.SplitSpec(0.8, 0.15, 0.05, seed=42)
    a = D.split_dataset(entries, spec)
    b = D.split_dataset(entries, spec)
    assert [e.split for e in a] == [e.split for e in b]
    assert all(e.split in D.SPLITS for e in a)
    assert sorted(e.sample_id for e in a) == sorted(e.sample_id for e in entries)


def test_split_rejects_assigned():
    entries = [entry(0, split="train"), entry(1)]
    with pytest.raises(ValueError):
        D.split_dataset(entries, D.SplitSpec(0.8, 0.15, 0.05))


@settings(max_examples=20, deadline=None)
@given(
    fake_fraction=st.sampled_from([0.3, 0.4, 0.5, 0.6, 0.7]),
    seed=st.integers(0, 10_000),
)
def test_split_stratification(fake_fraction, seed):
    entries = mixed_entries(1000, fake_fraction=fake_fraction)
    out = D.split_dataset(entries, D.SplitSpec(0.8, 0.15, 0.05, seed=seed))
    global_fake = sum(1 for e in out if e.label == "fake") / len(out)
    for split in D.SPLITS:
        members = [e for e in out if e.split == split]
        fake = sum(1 for e in members if e.label == "fake") / len(members)
        assert abs(fake - global_fake) <= 0.02


# ---------------------------------------------------------------------------
# Frame sampling
# ---------------------------------------------------------------------------


def test_sample_frames_uniform():
    e = entry(0, n_frames=40)
    picked = D.sample_frames(e, 15)
    assert len(picked) == 15
    indices = [e.frames.index(p) for p in picked]
    assert all(a < b for a, b in zip(indices, indices[1:]))
    assert picked[0] == e.frames[0] and picked[-1] == e.frames[-1]


def test_sample_frames_short_and_boundary():
    e = entry(0, n_frames=8)
    assert D.sample_frames(e, 15) == list(e.frames)
    e = entry(0, n_frames=40)
    assert D.sample_frames(e, 40) == list(e.frames)
    with pytest.raises(ValueError):
        D.sample_frames(e, 0)


@given(n=st.integers(1, 200), k=st.integers(1, 50))
def test_sample_frames_properties(n, k):
    e = entry(0, n_frames=n)
    picked = D.sample_frames(e, k)
    assert len(picked) == min(n, k)
    indices = [e.frames.index(p) for p in picked]
    assert all(a < b for a, b in zip(indices, indices[1:]))
    if n <= k:
        assert picked == list(e.frames)
        assert D.sample_frames(e, k) == picked  # idempotent


def test_sample_frames_sweep_distinct():
    e = entry(0, n_frames=40)
    picks = {k: tuple(D.sample_frames(e, k)) for k in (10, 15, 24)}
    assert len(set(picks.values())) == 3


# ---------------------------------------------------------------------------
# Image loading
# ---------------------------------------------------------------------------


def test_resize_normalize_resizes(tmp_path):
    import cv2

    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(480, 640, 3), dtype=np.uint8)
    path = tmp_path / "img.png"
    cv2.imwrite(str(path), cv2.cvtColor(img, cv2.COLOR_RGB2BGR))
    out = D.resize_normalize(path, 224)
    assert out.shape == (3, 224, 224)
    assert out.dtype == np.float32
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_resize_normalize_identity(tmp_path):
    import cv2

    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, size=(224, 224, 3), dtype=np.uint8)
    path = tmp_path / "img.png"
    cv2.imwrite(str(path), cv2.cvtColor(img, cv2.COLOR_RGB2BGR))
    out = D.resize_normalize(path, 224)
    np.testing.assert_allclose(
        out, img.astype(np.float32).transpose(2, 0, 1) / 255.0, atol=1.0 / 255.0
    )


def test_resize_normalize_undecodable(tmp_path):
    path = tmp_path / "broken.png"
    path.write_bytes(b"this is not an image")
    with pytest.raises(ValueError, match="undecodable"):
        D.resize_normalize(path, 56)


# ---------------------------------------------------------------------------
# Face-crop adapter
# ---------------------------------------------------------------------------


def test_apply_crop_adapter():
    entries = [entry(0, n_frames=3), entry(1, label="real", n_frames=2)]
    out = D.apply_crop_adapter(entries, lambda p: f"crops/{p}")
    assert all(f.startswith("crops/") for e in out for f in e.frames)
    assert [len(e.frames) for e in out] == [3, 2]
    assert [e.label for e in out] == [e.label for e in entries]
    assert entries[0].frames[0].startswith("wav2lip/")  # originals untouched


# ---------------------------------------------------------------------------
# Anonymization
# ---------------------------------------------------------------------------


def test_anonymize_format_and_map(tmp_path):
    entries = [entry(0), entry(1, label="real"), entry(2)]
    map_path = tmp_path / "map.tsv"
    out = D.anonymize_names(entries, seed=9, map_path=map_path)
    for e in out:
        assert len(e.sample_id) == 16
        int(e.sample_id, 16)  # valid hex
    mapping = D.read_anonymization_map(map_path)
    assert sorted(mapping.values()) == sorted(e.sample_id for e in entries)
    # labels and methods untouched
    assert [e.label for e in out] == [e.label for e in entries]
    assert [e.method for e in out] == [e.method for e in entries]


def test_anonymize_no_collisions_large():
    entries = [entry(i) for i in range(100_000)]
    import tempfile, os

    with tempfile.TemporaryDirectory() as d:
        out = D.anonymize_names(entries, seed=0, map_path=os.path.join(d, "m.tsv"))
    ids = {e.sample_id for e in out}
    assert len(ids) == len(entries)


def test_anonymize_deterministic(tmp_path):
    entries = [entry(i) for i in range(10)]
    a = D.anonymize_names(entries, seed=5, map_path=tmp_path / "a.tsv")
    b = D.anonymize_names(entries, seed=5, map_path=tmp_path / "b.tsv")
    assert [e.sample_id for e in a] == [e.sample_id for e in b]


# ---------------------------------------------------------------------------
# Stats
# ---------------------------------------------------------------------------


def test_dataset_stats():
    entries = [entry(0, label="real"), entry(1, label="real"), entry(2), entry(3), entry(4)]
    stats = D.compute_dataset_stats(entries)
    assert stats.by_label == {"real": 2, "fake": 3}
    assert sum(stats.by_method.values()) == stats.total == 5
    empty = D.compute_dataset_stats([])
    assert empty.total == 0 and empty.by_label == {"real": 0, "fake": 0}
