"""Seeded image augmentation for training.

Images are (3, H, W) float32 arrays in [0, 1]. Each transform below is a
plain function so it can be exercised directly; :func:`augment` drives them:
with probability ``cfg.rate`` it applies a short random chain of the enabled
transforms, otherwise it returns the image unchanged. Everything is
deterministic given the seed.

Magnitude defaults (rotation <= 30 deg, shift <= 10%, scale in [0.9, 1.1],
noise sigma <= 0.05, CLAHE clip 2.0, brightness/contrast +/-20%, hue
+/-10 deg) are configurable; only the transform vocabulary is fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

TRANSFORM_NAMES = (
    "rotate",
    "transpose",
    "hflip",
    "vflip",
    "gauss_noise",
    "shift_scale_rotate",
    "clahe",
    "sharpen",
    "emboss",
    "brightness_contrast",
    "hue_saturation",
)


@dataclass(frozen=True)
class AugmentationConfig:
    rate: float = 0.9
    transforms: tuple[str, ...] = TRANSFORM_NAMES
    max_rotate_deg: float = 30.0
    max_shift_frac: float = 0.10
    scale_range: tuple[float, float] = (0.9, 1.1)
    noise_sigma: float = 0.05
    clahe_clip: float = 2.0
    brightness_limit: float = 0.2
    contrast_limit: float = 0.2
    hue_limit_deg: float = 10.0
    saturation_limit: float = 0.1
    max_chain: int = 3

    def __post_init__(self) -> None:
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"rate must be in [0, 1], got {self.rate}")
        unknown = set(self.transforms) - set(TRANSFORM_NAMES)
        if unknown:
            raise ValueError(f"unknown transforms: {sorted(unknown)}")
        if self.max_chain < 1:
            raise ValueError("max_chain must be >= 1")


def _to_hwc(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image.transpose(1, 2, 0))


def _to_chw(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image.transpose(2, 0, 1))


def hflip(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image[:, :, ::-1])


def vflip(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image[:, ::-1, :])


def transpose(image: np.ndarray) -> np.ndarray:
    """Swap the spatial axes (square images only)."""
    if image.shape[1] != image.shape[2]:
        raise ValueError("transpose requires a square image")
    return np.ascontiguousarray(image.transpose(0, 2, 1))


def rotate(image: np.ndarray, angle_deg: float) -> np.ndarray:
    hwc = _to_hwc(image)
    h, w = hwc.shape[:2]
    mat = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), angle_deg, 1.0)
    out = cv2.warpAffine(
        hwc, mat, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT_101
    )
    return _to_chw(out)


def shift_scale_rotate(
    image: np.ndarray, shift_x: float, shift_y: float, scale: float, angle_deg: float
) -> np.ndarray:
    hwc = _to_hwc(image)
    h, w = hwc.shape[:2]
    mat = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), angle_deg, scale)
    mat[0, 2] += shift_x * w
    mat[1, 2] += shift_y * h
    out = cv2.warpAffine(
        hwc, mat, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT_101
    )
    return _to_chw(out)


def gauss_noise(image: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    noisy = image + rng.normal(0.0, sigma, size=image.shape).astype(np.float32)
    return np.clip(noisy, 0.0, 1.0)


def clahe(image: np.ndarray, clip_limit: float) -> np.ndarray:
    """Adaptive histogram equalization on the luminance channel."""
    hwc8 = (np.clip(_to_hwc(image), 0.0, 1.0) * 255.0).round().astype(np.uint8)
    lab = cv2.cvtColor(hwc8, cv2.COLOR_RGB2LAB)
    eq = cv2.createCLAHE(clipLimit=clip_limit, tileGridSize=(8, 8))
    lab[:, :, 0] = eq.apply(lab[:, :, 0])
    out = cv2.cvtColor(lab, cv2.COLOR_LAB2RGB).astype(np.float32) / 255.0
    return _to_chw(out)


_SHARPEN_KERNEL = np.array([[0, -1, 0], [-1, 5, -1], [0, -1, 0]], dtype=np.float32)
_EMBOSS_KERNEL = np.array([[-2, -1, 0], [-1, 1, 1], [0, 1, 2]], dtype=np.float32)


def sharpen(image: np.ndarray, alpha: float) -> np.ndarray:
    hwc = _to_hwc(image)
    filtered = cv2.filter2D(hwc, -1, _SHARPEN_KERNEL)
    out = (1.0 - alpha) * hwc + alpha * filtered
    return np.clip(_to_chw(out), 0.0, 1.0)


def emboss(image: np.ndarray, alpha: float) -> np.ndarray:
    hwc = _to_hwc(image)
    filtered = cv2.filter2D(hwc, -1, _EMBOSS_KERNEL) + 0.5
    out = (1.0 - alpha) * hwc + alpha * filtered
    return np.clip(_to_chw(out), 0.0, 1.0)


def brightness_contrast(image: np.ndarray, brightness: float, contrast: float) -> np.ndarray:
    out = image * (1.0 + contrast) + brightness
    return np.clip(out, 0.0, 1.0)


def hue_saturation(
    image: np.ndarray, hue_deg: float, sat_shift: float, val_shift: float
) -> np.ndarray:
    hsv = cv2.cvtColor(np.clip(_to_hwc(image), 0.0, 1.0), cv2.COLOR_RGB2HSV)
    hsv[:, :, 0] = np.mod(hsv[:, :, 0] + hue_deg, 360.0)
    hsv[:, :, 1] = np.clip(hsv[:, :, 1] * (1.0 + sat_shift), 0.0, 1.0)
    hsv[:, :, 2] = np.clip(hsv[:, :, 2] * (1.0 + val_shift), 0.0, 1.0)
    out = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)
    return np.clip(_to_chw(out), 0.0, 1.0)


def _apply_one(
    name: str, image: np.ndarray, rng: np.random.Generator, cfg: AugmentationConfig
) -> np.ndarray:
    if name == "rotate":
        return rotate(image, rng.uniform(-cfg.max_rotate_deg, cfg.max_rotate_deg))
    if name == "transpose":
        return transpose(image)
    if name == "hflip":
        return hflip(image)
    if name == "vflip":
        return vflip(image)
    if name == "gauss_noise":
        return gauss_noise(image, rng.uniform(0.3, 1.0) * cfg.noise_sigma, rng)
    if name == "shift_scale_rotate":
        return shift_scale_rotate(
            image,
            rng.uniform(-cfg.max_shift_frac, cfg.max_shift_frac),
            rng.uniform(-cfg.max_shift_frac, cfg.max_shift_frac),
            rng.uniform(*cfg.scale_range),
            rng.uniform(-cfg.max_rotate_deg, cfg.max_rotate_deg),
        )
    if name == "clahe":
        return clahe(image, cfg.clahe_clip)
    if name == "sharpen":
        return sharpen(image, rng.uniform(0.2, 0.5))
    if name == "emboss":
        return emboss(image, rng.uniform(0.2, 0.5))
    if name == "brightness_contrast":
        return brightness_contrast(
            image,
            rng.uniform(-cfg.brightness_limit, cfg.brightness_limit),
            rng.uniform(-cfg.contrast_limit, cfg.contrast_limit),
        )
    if name == "hue_saturation":
        return hue_saturation(
            image,
            rng.uniform(-cfg.hue_limit_deg, cfg.hue_limit_deg),
            rng.uniform(-cfg.saturation_limit, cfg.saturation_limit),
            rng.uniform(-cfg.saturation_limit, cfg.saturation_limit),
        )
    raise ValueError(f"unknown transform {name!r}")


def augment(image: np.ndarray, cfg: AugmentationConfig, seed: int) -> np.ndarray:
    """With probability cfg.rate apply a random chain of enabled transforms.

    The output always has the input's shape, stays in [0, 1] and is float32;
    identical (image, cfg, seed) triples give identical outputs.
    """
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) image, got shape {image.shape}")
    rng = np.random.default_rng(seed)
    if rng.random() >= cfg.rate:
        return image.copy()
    enabled = [
        t
        for t in cfg.transforms
        if not (t == "transpose" and image.shape[1] != image.shape[2])
    ]
    if not enabled:
        return image.copy()
    chain_len = int(rng.integers(1, min(cfg.max_chain, len(enabled)) + 1))
    chain = rng.choice(len(enabled), size=chain_len, replace=False)
    out = image
    for idx in chain:
        out = _apply_one(enabled[int(idx)], out, rng, cfg)
    return np.clip(out.astype(np.float32), 0.0, 1.0)
