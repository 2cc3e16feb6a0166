"""Lightweight comparison detectors and the model registry.

The registry gives the harness one vocabulary of model names (also the CLI's
``--model`` values). Every registered detector obeys the same contract:
accepts (B, 3, S, S) images in [0, 1] at the configured size, returns a
DetectorOutput with two finite logits per sample, and is deterministic in
eval mode.

Meso4 is a reconstruction of the classic four-block mesoscopic CNN (block
widths 8/8/16/16); the original gives no exact layer table. The SPSL-style
detector augments the image with a spectral-phase channel and runs a
Meso4-sized CNN over the 4-channel stack; the original uses an Xception
backbone, which is out of scope here. Names for xception, efficientnet_b4
and ucf are reserved and raise until an external plug-in registers them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import torch
import torch.nn as nn

from .genconvit import DetectorOutput, NetworkA, NetworkB, config_for_size


class Meso4(nn.Module):
    """Four conv blocks (conv + ReLU + BN + max-pool) and a two-layer head.

    Pooling reduces the input by 32x overall (2, 2, 2, then 4), so the head
    size adapts to the configured input size. Well under 100k parameters.
    """

    BLOCKS = ((8, 3, 2), (8, 5, 2), (16, 5, 2), (16, 5, 4))  # width, kernel, pool

    def __init__(self, input_size: int = 256, in_channels: int = 3):
        super().__init__()
        if input_size // 32 < 1:
            raise ValueError(f"input size {input_size} too small for 32x pooling")
        self.input_size = input_size
        self.in_channels = in_channels
        blocks = []
        ch = in_channels
        for width, kernel, pool in self.BLOCKS:
            blocks.append(
                nn.Sequential(
                    nn.Conv2d(ch, width, kernel, padding=kernel // 2),
                    nn.ReLU(inplace=True),
                    nn.BatchNorm2d(width),
                    nn.MaxPool2d(pool),
                )
            )
            ch = width
        self.blocks = nn.Sequential(*blocks)
        side = input_size
        for _, _, pool in self.BLOCKS:
            side //= pool
        flat = self.BLOCKS[-1][0] * side * side
        self.head = nn.Sequential(
            nn.Dropout(0.5),
            nn.Linear(flat, 16),
            nn.LeakyReLU(0.1),
            nn.Dropout(0.5),
            nn.Linear(16, 2),
        )

    def forward(self, image: torch.Tensor) -> DetectorOutput:
        squeeze = image.dim() == 3
        if squeeze:
            image = image.unsqueeze(0)
        if image.shape[1] != self.in_channels or image.shape[-1] != self.input_size:
            raise ValueError(
                f"meso4: expected (B, {self.in_channels}, {self.input_size}, "
                f"{self.input_size}), got {tuple(image.shape)}"
            )
        x = self.blocks(image)
        logits = self.head(x.flatten(1))
        return DetectorOutput(logits=logits.squeeze(0) if squeeze else logits)


def spsl_phase_features(image: torch.Tensor) -> torch.Tensor:
    """Append a spectral-phase channel to an RGB image.

    The image is converted to grayscale, Fourier transformed, and the
    unit-magnitude spectrum (phase only) is inverse-transformed back to the
    spatial domain; the result is min-max scaled to [0, 1] and stacked as a
    fourth channel. Bins whose magnitude is negligible relative to the
    spectrum peak are zeroed rather than normalized, so degenerate spectra
    (e.g. constant images) stay degenerate, and the channel is invariant to
    global brightness scaling.
    """
    squeeze = image.dim() == 3
    if squeeze:
        image = image.unsqueeze(0)
    if image.dim() != 4 or image.shape[1] != 3:
        raise ValueError(f"expected (B, 3, H, W) image, got {tuple(image.shape)}")
    h, w = image.shape[-2], image.shape[-1]
    if h % 2 or w % 2:
        raise ValueError(f"phase features require even spatial dims, got {h}x{w}")
    weights = torch.tensor([0.299, 0.587, 0.114], dtype=torch.float64, device=image.device)
    gray = (image.double() * weights.view(1, 3, 1, 1)).sum(dim=1)
    spectrum = torch.fft.fft2(gray)
    mag = spectrum.abs()
    peak = mag.amax(dim=(-2, -1), keepdim=True)
    mask = mag > (1e-9 * peak)
    unit = torch.where(mask, spectrum / mag.clamp_min(1e-300), torch.zeros_like(spectrum))
    phase_img = torch.fft.ifft2(unit).real
    lo = phase_img.amin(dim=(-2, -1), keepdim=True)
    hi = phase_img.amax(dim=(-2, -1), keepdim=True)
    span = (hi - lo).clamp_min(1e-12)
    scaled = torch.where(hi > lo, (phase_img - lo) / span, torch.zeros_like(phase_img))
    out = torch.cat([image, scaled.unsqueeze(1).to(image.dtype)], dim=1)
    return out.squeeze(0) if squeeze else out


class SpslDetector(nn.Module):
    """Phase-channel augmentation followed by a Meso4-style CNN over 4 channels."""

    def __init__(self, input_size: int = 256):
        super().__init__()
        self.cnn = Meso4(input_size=input_size, in_channels=4)

    def forward(self, image: torch.Tensor) -> DetectorOutput:
        return self.cnn(spsl_phase_features(image))


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


@dataclass
class DetectorHandle:
    """A constructed detector plus its identifying config echo."""

    name: str
    model: nn.Module
    config: dict = field(default_factory=dict)

    def __call__(self, image: torch.Tensor) -> DetectorOutput:
        return self.model(image)


Builder = Callable[[int], nn.Module]

_REGISTRY: dict[str, Builder] = {}


def registry_register(name: str, builder: Builder) -> None:
    if name in _REGISTRY:
        raise ValueError(f"detector name already registered: {name!r}")
    _REGISTRY[name] = builder


def registry_get(name: str) -> Builder:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown detector {name!r}; known: {', '.join(registry_names())}"
        ) from None


def registry_names() -> list[str]:
    return sorted(_REGISTRY)


def create_detector(name: str, image_size: int) -> DetectorHandle:
    model = registry_get(name)(image_size)
    return DetectorHandle(
        name=name, model=model, config={"model": name, "image_size": image_size}
    )


def _build_genconvit_ae(image_size: int) -> nn.Module:
    return NetworkA(config_for_size(image_size))


def _build_genconvit_vae(image_size: int) -> nn.Module:
    return NetworkB(config_for_size(image_size))


def _build_meso4(image_size: int) -> nn.Module:
    return Meso4(input_size=image_size)


def _build_spsl(image_size: int) -> nn.Module:
    return SpslDetector(input_size=image_size)


def _not_bundled(name: str) -> Builder:
    def builder(image_size: int) -> nn.Module:
        raise NotImplementedError(
            f"{name} is not bundled; provide an external plug-in via registry_register()"
        )

    return builder


registry_register("genconvit_ae", _build_genconvit_ae)
registry_register("genconvit_vae", _build_genconvit_vae)
registry_register("meso4", _build_meso4)
registry_register("spsl", _build_spsl)
for _reserved in ("xception", "efficientnet_b4", "ucf"):
    registry_register(_reserved, _not_bundled(_reserved))
