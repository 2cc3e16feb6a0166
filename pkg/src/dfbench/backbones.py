"""Simplified CNN and windowed-attention backbones for the hybrid detectors.

These are interface-compatible stand-ins for the full ConvNeXt / Swin
architectures: the stage layout, token widths and windowed attention geometry
match, while depths are kept small enough to run on a CPU. The
``canonical`` preset keeps the canonical widths (final feature width 768 at
224-pixel input); the ``desk`` preset shrinks everything to 56-pixel inputs
and width 64 for fast tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

CONVNEXT_LIKE = "convnext_like"
SWIN_LIKE = "swin_like"


@dataclass(frozen=True)
class BackboneConfig:
    kind: str
    depths: tuple[int, ...]
    widths: tuple[int, ...]
    window: int = 7
    patch_size: int = 4
    num_heads: int = 4

    def __post_init__(self) -> None:
        if self.kind not in (CONVNEXT_LIKE, SWIN_LIKE):
            raise ValueError(f"unknown backbone kind {self.kind!r}")
        if len(self.depths) != len(self.widths):
            raise ValueError("depths and widths must have the same length")


def convnext_tiny_like() -> BackboneConfig:
    return BackboneConfig(
        kind=CONVNEXT_LIKE, depths=(1, 1, 1, 1), widths=(96, 192, 384, 768)
    )


def convnext_desk() -> BackboneConfig:
    return BackboneConfig(kind=CONVNEXT_LIKE, depths=(1, 1), widths=(32, 64))


def swin_tiny_like() -> BackboneConfig:
    return BackboneConfig(
        kind=SWIN_LIKE, depths=(2,), widths=(96,), window=7, num_heads=4
    )


def swin_desk() -> BackboneConfig:
    return BackboneConfig(
        kind=SWIN_LIKE, depths=(2,), widths=(64,), window=7, num_heads=4
    )


class ChannelLayerNorm(nn.Module):
    """LayerNorm over the channel axis of (B, C, H, W) maps."""

    def __init__(self, channels: int):
        super().__init__()
        self.norm = nn.LayerNorm(channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x.permute(0, 2, 3, 1)
        x = self.norm(x)
        return x.permute(0, 3, 1, 2)


class ConvNeXtBlock(nn.Module):
    """Depthwise 7x7 conv + pointwise MLP with a residual connection."""

    def __init__(self, dim: int):
        super().__init__()
        self.dwconv = nn.Conv2d(dim, dim, kernel_size=7, padding=3, groups=dim)
        self.norm = nn.LayerNorm(dim)
        self.pwconv1 = nn.Linear(dim, 4 * dim)
        self.pwconv2 = nn.Linear(4 * dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        shortcut = x
        x = self.dwconv(x)
        x = x.permute(0, 2, 3, 1)
        x = self.norm(x)
        x = self.pwconv2(F.gelu(self.pwconv1(x)))
        x = x.permute(0, 3, 1, 2)
        return shortcut + x


class ConvNeXtLike(nn.Module):
    """Patchify stem plus downsampling stages of ConvNeXt blocks.

    forward maps (B, C, H, W) images to a (B, widths[-1], H', W') feature map
    where H' = H / (patch_size * 2^(n_stages - 1)).
    """

    def __init__(self, cfg: BackboneConfig, in_channels: int = 3):
        super().__init__()
        if cfg.kind != CONVNEXT_LIKE:
            raise ValueError(f"expected {CONVNEXT_LIKE} config, got {cfg.kind}")
        self.cfg = cfg
        self.stem = nn.Sequential(
            nn.Conv2d(in_channels, cfg.widths[0], cfg.patch_size, stride=cfg.patch_size),
            ChannelLayerNorm(cfg.widths[0]),
        )
        stages = []
        for i, (depth, width) in enumerate(zip(cfg.depths, cfg.widths)):
            layers: list[nn.Module] = []
            if i > 0:
                layers.append(ChannelLayerNorm(cfg.widths[i - 1]))
                layers.append(nn.Conv2d(cfg.widths[i - 1], width, 2, stride=2))
            layers.extend(ConvNeXtBlock(width) for _ in range(depth))
            stages.append(nn.Sequential(*layers))
        self.stages = nn.ModuleList(stages)
        self.reduction = cfg.patch_size * 2 ** (len(cfg.depths) - 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] % self.reduction or x.shape[-2] % self.reduction:
            raise ValueError(
                f"input {tuple(x.shape[-2:])} not divisible by stage reduction "
                f"{self.reduction}"
            )
        x = self.stem(x)
        for stage in self.stages:
            x = stage(x)
        return x


def window_partition(x: torch.Tensor, window: int) -> torch.Tensor:
    """(B, H, W, C) -> (B * nWindows, window*window, C)."""
    b, h, w, c = x.shape
    x = x.view(b, h // window, window, w // window, window, c)
    x = x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window * window, c)
    return x


def window_merge(x: torch.Tensor, window: int, h: int, w: int) -> torch.Tensor:
    """Inverse of window_partition back to (B, H, W, C)."""
    b = x.shape[0] // ((h // window) * (w // window))
    x = x.view(b, h // window, w // window, window, window, -1)
    x = x.permute(0, 1, 3, 2, 4, 5).reshape(b, h, w, -1)
    return x


class WindowAttention(nn.Module):
    """Multi-head self-attention computed independently per window."""

    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        if dim % num_heads:
            raise ValueError(f"dim {dim} not divisible by num_heads {num_heads}")
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(
        self, windows: torch.Tensor, return_weights: bool = False
    ) -> torch.Tensor | tuple[torch.Tensor, torch.Tensor]:
        bw, n, c = windows.shape
        qkv = self.qkv(windows).reshape(bw, n, 3, self.num_heads, c // self.num_heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        attn = torch.softmax((q @ k.transpose(-2, -1)) * self.scale, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(bw, n, c)
        out = self.proj(out)
        if return_weights:
            return out, attn
        return out


class SwinBlock(nn.Module):
    """Pre-norm windowed attention block, optionally with shifted windows."""

    def __init__(self, dim: int, num_heads: int, window: int, shift: int = 0):
        super().__init__()
        self.window = window
        self.shift = shift
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, 4 * dim), nn.GELU(), nn.Linear(4 * dim, dim)
        )

    def forward(self, x: torch.Tensor, grid: tuple[int, int]) -> torch.Tensor:
        h, w = grid
        b, n, c = x.shape
        if n != h * w:
            raise ValueError(f"token count {n} does not match grid {grid}")
        if h % self.window or w % self.window:
            raise ValueError(
                f"window {self.window} does not divide feature map {grid}"
            )
        shortcut = x
        y = self.norm1(x).view(b, h, w, c)
        if self.shift:
            y = torch.roll(y, shifts=(-self.shift, -self.shift), dims=(1, 2))
        y = window_partition(y, self.window)
        y = self.attn(y)
        y = window_merge(y, self.window, h, w)
        if self.shift:
            y = torch.roll(y, shifts=(self.shift, self.shift), dims=(1, 2))
        x = shortcut + y.reshape(b, n, c)
        return x + self.mlp(self.norm2(x))


class SwinStage(nn.Module):
    """A stack of windowed attention blocks over a fixed token grid.

    Blocks alternate between plain and shifted windows so information mixes
    across window boundaries.
    """

    def __init__(self, dim: int, depth: int, num_heads: int, window: int):
        super().__init__()
        self.blocks = nn.ModuleList(
            SwinBlock(dim, num_heads, window, shift=(window // 2) * (i % 2))
            for i in range(depth)
        )

    def forward(self, tokens: torch.Tensor, grid: tuple[int, int]) -> torch.Tensor:
        for block in self.blocks:
            tokens = block(tokens, grid)
        return tokens


class SwinLike(nn.Module):
    """Standalone swin-style backbone: patch embed, blocks, mean pool."""

    def __init__(self, cfg: BackboneConfig, in_channels: int = 3):
        super().__init__()
        if cfg.kind != SWIN_LIKE:
            raise ValueError(f"expected {SWIN_LIKE} config, got {cfg.kind}")
        self.cfg = cfg
        dim = cfg.widths[0]
        self.patch_embed = nn.Conv2d(in_channels, dim, cfg.patch_size, stride=cfg.patch_size)
        self.stage = SwinStage(dim, cfg.depths[0], cfg.num_heads, cfg.window)
        self.norm = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] % self.cfg.patch_size or x.shape[-2] % self.cfg.patch_size:
            raise ValueError(
                f"input {tuple(x.shape[-2:])} not divisible by patch size "
                f"{self.cfg.patch_size}"
            )
        x = self.patch_embed(x)
        b, c, h, w = x.shape
        tokens = x.flatten(2).transpose(1, 2)
        tokens = self.stage(tokens, (h, w))
        return self.norm(tokens).mean(dim=1)


class HybridEmbed(nn.Module):
    """1x1 projection of a CNN feature map to a token sequence.

    (B, C, H, W) -> (B, H*W, embed_dim): project channels, flatten the
    spatial grid and transpose to tokens-first layout.
    """

    def __init__(self, in_channels: int, embed_dim: int):
        super().__init__()
        self.proj = nn.Conv2d(in_channels, embed_dim, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        squeeze = x.dim() == 3
        if squeeze:
            x = x.unsqueeze(0)
        x = self.proj(x)
        tokens = x.flatten(2).transpose(1, 2)
        return tokens.squeeze(0) if squeeze else tokens


def build_backbone(cfg: BackboneConfig, in_channels: int = 3) -> nn.Module:
    """Construct the module for a backbone config.

    convnext_like backbones map images to feature maps; swin_like backbones
    map images to pooled feature vectors.
    """
    if cfg.kind == CONVNEXT_LIKE:
        return ConvNeXtLike(cfg, in_channels=in_channels)
    return SwinLike(cfg, in_channels=in_channels)
