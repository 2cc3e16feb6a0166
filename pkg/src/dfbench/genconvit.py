"""Dual-network hybrid detector: an autoencoder variant and a VAE variant.

Network A compresses the input through a five-stage convolutional
autoencoder (latent 256x7x7 at the default 224-pixel scale) and reconstructs
it at full resolution; Network B runs a four-stage convolutional VAE whose
flattened latent has 12544 dimensions and reconstructs at half resolution
(112x112x3 by default). Both feed the original image and its reconstruction
through a shared ConvNeXt-like extractor, a 1x1 hybrid embedding and a
windowed-attention stage, then classify the concatenated feature vectors
with a small fully-connected head (GELU activation for A, ReLU for B),
emitting two logits (real/fake).

Scale is fully config-driven: ``canonical_config()`` keeps the canonical
shapes above, ``desk_config()`` is a 56-pixel preset small enough for CPU
test runs. The desk presets keep the stage counts (5 encoder stages for the
autoencoder, 4 for the VAE) but run the tail stages at stride 1, since 56 is
not divisible by 2^5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbones import (
    BackboneConfig,
    ConvNeXtLike,
    HybridEmbed,
    SwinStage,
    convnext_desk,
    convnext_tiny_like,
)
from .nn_ops import LossValue


def _prod(xs) -> int:
    out = 1
    for x in xs:
        out *= x
    return out


# ---------------------------------------------------------------------------
# Configs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AEConfig:
    """Five-stage convolutional autoencoder; decoder mirrors the encoder."""

    input_size: int = 224
    input_channels: int = 3
    encoder_channels: tuple[int, ...] = (16, 32, 64, 128, 256)
    strides: tuple[int, ...] = (2, 2, 2, 2, 2)
    kernel_size: int = 3

    def __post_init__(self) -> None:
        if len(self.encoder_channels) != 5 or len(self.strides) != 5:
            raise ValueError("autoencoder must have exactly 5 encoder stages")
        reduction = _prod(self.strides)
        if self.input_size % reduction:
            raise ValueError(
                f"input size {self.input_size} is not divisible by the total "
                f"stride {reduction}; latent spatial size would not be integral"
            )

    @property
    def latent_spatial(self) -> int:
        return self.input_size // _prod(self.strides)

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        return (self.encoder_channels[-1], self.latent_spatial, self.latent_spatial)


@dataclass(frozen=True)
class VAEConfig:
    """Four-stage convolutional VAE encoder with BN + LeakyReLU per stage.

    The flattened encoder output is the latent dimension (64 * 14 * 14 =
    12544 at the default scale); reconstruction happens at recon_size pixels.
    """

    input_size: int = 224
    input_channels: int = 3
    encoder_channels: tuple[int, ...] = (16, 32, 64, 64)
    strides: tuple[int, ...] = (2, 2, 2, 2)
    recon_size: int = 112
    kernel_size: int = 3
    leaky_slope: float = 0.2

    def __post_init__(self) -> None:
        if len(self.encoder_channels) != 4 or len(self.strides) != 4:
            raise ValueError("VAE encoder must have exactly 4 stages")
        reduction = _prod(self.strides)
        if self.input_size % reduction:
            raise ValueError(
                f"input size {self.input_size} is not divisible by the total "
                f"stride {reduction}"
            )
        ratio = self.recon_size / self.latent_spatial
        ups = math.log2(ratio) if ratio >= 2 else -1
        if ups < 1 or ups != int(ups):
            raise ValueError(
                f"recon size {self.recon_size} must be latent spatial size "
                f"{self.latent_spatial} times a power of two (>= 2)"
            )

    @property
    def latent_spatial(self) -> int:
        return self.input_size // _prod(self.strides)

    @property
    def latent_dim(self) -> int:
        return self.encoder_channels[-1] * self.latent_spatial**2


@dataclass(frozen=True)
class HybridHeadConfig:
    """Token width of the 1x1 hybrid embedding plus the attention stage."""

    embed_dim: int = 768
    swin_depth: int = 2
    swin_heads: int = 8
    window: int = 7
    head_hidden: int = 256


@dataclass(frozen=True)
class GenConViTConfig:
    image_size: int = 224
    ae: AEConfig = field(default_factory=AEConfig)
    vae: VAEConfig = field(default_factory=VAEConfig)
    convnext: BackboneConfig = field(default_factory=convnext_tiny_like)
    hybrid: HybridHeadConfig = field(default_factory=HybridHeadConfig)


def canonical_config() -> GenConViTConfig:
    """Canonical shapes: 224 input, 256x7x7 AE latent, 12544 VAE latent,
    112-pixel VAE reconstruction, 768-wide hybrid tokens."""
    return GenConViTConfig()


def desk_config() -> GenConViTConfig:
    """CPU-friendly 56-pixel preset with width-64 hybrid tokens."""
    return GenConViTConfig(
        image_size=56,
        ae=AEConfig(
            input_size=56,
            encoder_channels=(8, 16, 32, 32, 64),
            strides=(2, 2, 2, 1, 1),
        ),
        vae=VAEConfig(
            input_size=56,
            encoder_channels=(8, 16, 32, 16),
            strides=(2, 2, 2, 1),
            recon_size=28,
        ),
        convnext=convnext_desk(),
        hybrid=HybridHeadConfig(embed_dim=64, swin_depth=2, swin_heads=4, window=7, head_hidden=64),
    )


def config_for_size(image_size: int) -> GenConViTConfig:
    if image_size == 224:
        return canonical_config()
    if image_size == 56:
        return desk_config()
    raise ValueError(
        f"no preset for image size {image_size}; use 224 (canonical) or 56 (desk), "
        "or construct a GenConViTConfig explicitly"
    )


# ---------------------------------------------------------------------------
# Output container
# ---------------------------------------------------------------------------


@dataclass
class DetectorOutput:
    """Per-sample class logits plus optional reconstruction and latent stats."""

    logits: torch.Tensor
    reconstruction: Optional[torch.Tensor] = None
    latent_mu: Optional[torch.Tensor] = None
    latent_logvar: Optional[torch.Tensor] = None


# ---------------------------------------------------------------------------
# Autoencoder / VAE
# ---------------------------------------------------------------------------


def _check_image(x: torch.Tensor, size: int, channels: int, who: str) -> torch.Tensor:
    if x.dim() == 3:
        x = x.unsqueeze(0)
    if x.dim() != 4 or x.shape[1] != channels or x.shape[2] != size or x.shape[3] != size:
        raise ValueError(
            f"{who}: expected (B, {channels}, {size}, {size}) input, got {tuple(x.shape)}"
        )
    return x


class ConvAutoencoder(nn.Module):
    """Stride-configurable conv encoder with a mirrored transposed decoder."""

    def __init__(self, cfg: AEConfig):
        super().__init__()
        self.cfg = cfg
        k, pad = cfg.kernel_size, cfg.kernel_size // 2
        enc = []
        in_ch = cfg.input_channels
        for ch, s in zip(cfg.encoder_channels, cfg.strides):
            enc.append(nn.Conv2d(in_ch, ch, k, stride=s, padding=pad))
            enc.append(nn.ReLU(inplace=True))
            in_ch = ch
        self.encoder = nn.Sequential(*enc)
        dec = []
        channels = (cfg.input_channels,) + cfg.encoder_channels
        for i in range(len(cfg.encoder_channels) - 1, -1, -1):
            s = cfg.strides[i]
            dec.append(
                nn.ConvTranspose2d(
                    channels[i + 1], channels[i], k, stride=s, padding=pad,
                    output_padding=s - 1,
                )
            )
            if i > 0:
                dec.append(nn.ReLU(inplace=True))
        dec.append(nn.Sigmoid())
        self.decoder = nn.Sequential(*dec)

    def encode(self, image: torch.Tensor) -> torch.Tensor:
        squeeze = image.dim() == 3
        x = _check_image(image, self.cfg.input_size, self.cfg.input_channels, "ae_encode")
        z = self.encoder(x)
        return z.squeeze(0) if squeeze else z

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        squeeze = latent.dim() == 3
        if squeeze:
            latent = latent.unsqueeze(0)
        if tuple(latent.shape[1:]) != self.cfg.latent_shape:
            raise ValueError(
                f"ae_decode: expected latent shape {self.cfg.latent_shape}, "
                f"got {tuple(latent.shape[1:])}"
            )
        x = self.decoder(latent)
        return x.squeeze(0) if squeeze else x

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(image))


def reparameterize(
    mu: torch.Tensor, logvar: torch.Tensor, noise: torch.Tensor
) -> torch.Tensor:
    """z = mu + exp(logvar / 2) * noise; caller supplies the N(0, I) noise."""
    if mu.shape != logvar.shape or mu.shape != noise.shape:
        raise ValueError(
            f"reparameterize: shapes differ: mu {tuple(mu.shape)}, "
            f"logvar {tuple(logvar.shape)}, noise {tuple(noise.shape)}"
        )
    return mu + torch.exp(0.5 * logvar) * noise


class ConvVae(nn.Module):
    """Conv encoder (BN + LeakyReLU stages) with flattened Gaussian latents.

    encode returns (mu, logvar), each of length cfg.latent_dim; decode maps a
    latent vector back to a recon_size image through transposed convolutions
    with a terminal sigmoid.
    """

    def __init__(self, cfg: VAEConfig):
        super().__init__()
        self.cfg = cfg
        k, pad = cfg.kernel_size, cfg.kernel_size // 2
        enc = []
        in_ch = cfg.input_channels
        for ch, s in zip(cfg.encoder_channels, cfg.strides):
            enc.append(nn.Conv2d(in_ch, ch, k, stride=s, padding=pad))
            enc.append(nn.BatchNorm2d(ch))
            enc.append(nn.LeakyReLU(cfg.leaky_slope, inplace=True))
            in_ch = ch
        self.encoder = nn.Sequential(*enc)
        last = cfg.encoder_channels[-1]
        self.mu_head = nn.Conv2d(last, last, kernel_size=1)
        self.logvar_head = nn.Conv2d(last, last, kernel_size=1)

        ups = int(math.log2(cfg.recon_size // self.latent_spatial))
        dec = []
        ch_in = last
        for i in range(ups):
            ch_out = cfg.input_channels if i == ups - 1 else max(last // 2 ** (i + 1), 8)
            dec.append(
                nn.ConvTranspose2d(ch_in, ch_out, k, stride=2, padding=pad, output_padding=1)
            )
            if i < ups - 1:
                dec.append(nn.LeakyReLU(cfg.leaky_slope, inplace=True))
            ch_in = ch_out
        dec.append(nn.Sigmoid())
        self.decoder = nn.Sequential(*dec)

    @property
    def latent_spatial(self) -> int:
        return self.cfg.latent_spatial

    def encode(self, image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        squeeze = image.dim() == 3
        x = _check_image(image, self.cfg.input_size, self.cfg.input_channels, "vae_encode")
        h = self.encoder(x)
        mu = self.mu_head(h).flatten(1)
        logvar = self.logvar_head(h).flatten(1)
        if squeeze:
            return mu.squeeze(0), logvar.squeeze(0)
        return mu, logvar

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        squeeze = z.dim() == 1
        if squeeze:
            z = z.unsqueeze(0)
        if z.shape[-1] != self.cfg.latent_dim:
            raise ValueError(
                f"vae_decode: expected latent length {self.cfg.latent_dim}, "
                f"got {z.shape[-1]}"
            )
        s = self.latent_spatial
        h = z.view(z.shape[0], self.cfg.encoder_channels[-1], s, s)
        x = self.decoder(h)
        return x.squeeze(0) if squeeze else x


# ---------------------------------------------------------------------------
# Hybrid feature path and the two networks
# ---------------------------------------------------------------------------


class HybridFeatures(nn.Module):
    """ConvNeXt-like features -> 1x1 hybrid embedding -> windowed attention
    -> mean-pooled feature vector."""

    def __init__(self, convnext_cfg: BackboneConfig, hybrid_cfg: HybridHeadConfig):
        super().__init__()
        self.features = ConvNeXtLike(convnext_cfg)
        self.embed = HybridEmbed(convnext_cfg.widths[-1], hybrid_cfg.embed_dim)
        self.swin = SwinStage(
            hybrid_cfg.embed_dim,
            hybrid_cfg.swin_depth,
            hybrid_cfg.swin_heads,
            hybrid_cfg.window,
        )
        self.norm = nn.LayerNorm(hybrid_cfg.embed_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        fmap = self.features(x)
        grid = (fmap.shape[-2], fmap.shape[-1])
        tokens = self.embed(fmap)
        tokens = self.swin(tokens, grid)
        return self.norm(tokens).mean(dim=1)


class _ClassifierHead(nn.Module):
    def __init__(self, in_dim: int, hidden: int, activation: nn.Module):
        super().__init__()
        self.net = nn.Sequential(
            nn.LayerNorm(in_dim),
            nn.Linear(in_dim, hidden),
            activation,
            nn.Linear(hidden, 2),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class NetworkA(nn.Module):
    """Autoencoder variant: hybrid features of the input and of its AE
    reconstruction, classified by a GELU-activated head."""

    def __init__(self, cfg: GenConViTConfig):
        super().__init__()
        self.cfg = cfg
        self.autoencoder = ConvAutoencoder(cfg.ae)
        self.hybrid = HybridFeatures(cfg.convnext, cfg.hybrid)
        self.classifier = _ClassifierHead(
            2 * cfg.hybrid.embed_dim, cfg.hybrid.head_hidden, nn.GELU()
        )

    def classify_pair(self, image: torch.Tensor, reconstruction: torch.Tensor) -> torch.Tensor:
        feats = torch.cat(
            [self.hybrid(image), self.hybrid(reconstruction)], dim=-1
        )
        return self.classifier(feats)

    def forward(
        self, image: torch.Tensor, include_reconstruction: bool = False
    ) -> DetectorOutput:
        squeeze = image.dim() == 3
        x = _check_image(image, self.cfg.image_size, 3, "network_a")
        recon = self.autoencoder(x)
        logits = self.classify_pair(x, recon)
        if squeeze:
            logits, recon = logits.squeeze(0), recon.squeeze(0)
        return DetectorOutput(
            logits=logits, reconstruction=recon if include_reconstruction else None
        )


class NetworkB(nn.Module):
    """VAE variant: reconstruction comes from the reparameterized latent and
    is returned alongside mu/logvar; the head uses ReLU activation.

    The reconstruction is produced at cfg.vae.recon_size and bilinearly
    upsampled back to the input size before feature extraction.
    """

    def __init__(self, cfg: GenConViTConfig):
        super().__init__()
        self.cfg = cfg
        self.vae = ConvVae(cfg.vae)
        self.hybrid = HybridFeatures(cfg.convnext, cfg.hybrid)
        self.classifier = _ClassifierHead(
            2 * cfg.hybrid.embed_dim, cfg.hybrid.head_hidden, nn.ReLU()
        )

    def forward(
        self, image: torch.Tensor, noise: Optional[torch.Tensor] = None
    ) -> DetectorOutput:
        squeeze = image.dim() == 3
        x = _check_image(image, self.cfg.image_size, 3, "network_b")
        mu, logvar = self.vae.encode(x)
        if noise is None:
            noise = torch.randn_like(mu) if self.training else torch.zeros_like(mu)
        elif noise.shape != mu.shape:
            if squeeze and noise.dim() == 1:
                noise = noise.unsqueeze(0)
            if noise.shape != mu.shape:
                raise ValueError(
                    f"noise shape {tuple(noise.shape)} != latent shape {tuple(mu.shape)}"
                )
        z = reparameterize(mu, logvar, noise)
        recon = self.vae.decode(z)
        recon_full = F.interpolate(
            recon, size=(self.cfg.image_size, self.cfg.image_size),
            mode="bilinear", align_corners=False,
        )
        feats = torch.cat([self.hybrid(x), self.hybrid(recon_full)], dim=-1)
        logits = self.classifier(feats)
        if squeeze:
            logits, recon, mu, logvar = (
                logits.squeeze(0), recon.squeeze(0), mu.squeeze(0), logvar.squeeze(0),
            )
        return DetectorOutput(
            logits=logits, reconstruction=recon, latent_mu=mu, latent_logvar=logvar
        )


# ---------------------------------------------------------------------------
# Prediction combination and losses
# ---------------------------------------------------------------------------

COMBINE_MODES = ("avg", "max", "a_only", "b_only")


def fake_probability(output: DetectorOutput) -> torch.Tensor:
    """Softmax fake-class probability from the two logits."""
    return torch.softmax(output.logits, dim=-1)[..., 1]


def combine_scores(p_a: torch.Tensor, p_b: torch.Tensor, mode: str = "avg") -> torch.Tensor:
    if mode == "avg":
        return (p_a + p_b) / 2.0
    if mode == "max":
        return torch.maximum(p_a, p_b)
    if mode == "a_only":
        return p_a
    if mode == "b_only":
        return p_b
    raise ValueError(f"unknown combine mode {mode!r}; expected one of {COMBINE_MODES}")


def combined_predict(
    out_a: DetectorOutput, out_b: DetectorOutput, mode: str = "avg"
) -> torch.Tensor:
    """Combine the two networks' fake probabilities for the same samples."""
    return combine_scores(fake_probability(out_a), fake_probability(out_b), mode)


def detector_loss_terms(
    output: DetectorOutput,
    labels: torch.Tensor,
    target_images: Optional[torch.Tensor] = None,
    recon_weight: float = 1.0,
    require_reconstruction: bool = False,
) -> dict[str, torch.Tensor]:
    """Differentiable loss terms: CE always, plus weighted reconstruction MSE
    whenever the output carries a reconstruction.

    Targets are bilinearly resampled to the reconstruction's resolution when
    the two differ (the half-resolution VAE case).
    """
    logits = output.logits
    if logits.dim() == 1:
        logits = logits.unsqueeze(0)
    labels = labels.reshape(-1)
    terms = {"ce": F.cross_entropy(logits, labels)}
    recon = output.reconstruction
    if require_reconstruction and recon is None:
        raise ValueError("loss plan requires a reconstruction but the output has none")
    if recon is not None:
        if target_images is None:
            raise ValueError("reconstruction loss requires target images")
        if recon.dim() == 3:
            recon = recon.unsqueeze(0)
        if target_images.dim() == 3:
            target_images = target_images.unsqueeze(0)
        if target_images.shape[-2:] != recon.shape[-2:]:
            target_images = F.interpolate(
                target_images, size=recon.shape[-2:], mode="bilinear", align_corners=False
            )
        terms["mse"] = F.mse_loss(recon, target_images)
        terms["total"] = terms["ce"] + recon_weight * terms["mse"]
    else:
        terms["total"] = terms["ce"]
    return terms


def network_losses(
    output: DetectorOutput,
    labels: torch.Tensor,
    target_images: Optional[torch.Tensor] = None,
    recon_weight: float = 1.0,
    require_reconstruction: bool = False,
) -> LossValue:
    """Composite loss with named components (floats, detached)."""
    terms = detector_loss_terms(
        output, labels, target_images, recon_weight, require_reconstruction
    )
    return LossValue(
        float(terms["total"].detach()),
        components={k: float(v.detach()) for k, v in terms.items() if k != "total"},
    )
