"""Fine-tuning loop: Adam over shuffled mini-batches with epoch sweeps.

The protocol is deliberately plain: a fixed learning rate, no scheduler, no
weight decay, no early stopping. ``epochs`` may be a list, in which case one
checkpoint is snapshotted at each listed epoch while training runs through
to the largest. All randomness (init, shuffling, VAE noise) flows from the
config seed; per-epoch shuffles use seeds derived from (seed, epoch).

Default hyperparameters follow the training tables this harness reproduces:
learning rate 1e-4 for the dual-network detectors (batch 32 for the AE
variant, 16 for the VAE variant) and 2e-4 with batch 32 for the baselines;
Adam moment defaults (0.9, 0.999, eps 1e-8) are standard and configurable.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .augment import AugmentationConfig
from .baselines import create_detector
from .checkpoint import Checkpoint, load_checkpoint, load_into, save_checkpoint
from .genconvit import DetectorOutput, detector_loss_terms

DIVERGENCE_THRESHOLD = 1e6

_DEFAULTS = {
    # model -> (learning rate, batch size, needs reconstruction loss)
    "genconvit_ae": (1e-4, 32, False),
    "genconvit_vae": (1e-4, 16, True),
}
_BASELINE_DEFAULTS = (2e-4, 32, False)


@dataclass(frozen=True)
class TrainConfig:
    model: str
    image_size: int = 56
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: tuple[int, ...] = (10,)
    use_reconstruction_loss: bool = False
    recon_weight: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    augmentation: Optional[AugmentationConfig] = None
    checkpoint_in: Optional[str] = None
    checkpoint_out: Optional[str] = None

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.epochs or min(self.epochs) < 1:
            raise ValueError("epochs must contain values >= 1")


def default_train_config(model: str, image_size: int = 56, **overrides) -> TrainConfig:
    lr, batch, recon = _DEFAULTS.get(model, _BASELINE_DEFAULTS)
    cfg = TrainConfig(
        model=model,
        image_size=image_size,
        learning_rate=lr,
        batch_size=batch,
        use_reconstruction_loss=recon,
    )
    return replace(cfg, **overrides) if overrides else cfg


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    wall_seconds: float


@dataclass
class FinetuneResult:
    checkpoint: Checkpoint
    history: list[EpochStats]
    saved_paths: list[Path]
    diverged: bool = False


def _epoch_seed(seed: int, epoch: int) -> int:
    return (seed * 1_000_003 + epoch) % (2**31 - 1)


def _to_batch(dataset, indices) -> tuple[torch.Tensor, torch.Tensor]:
    images, labels = [], []
    for i in indices:
        image, label = dataset[int(i)]
        images.append(np.asarray(image, dtype=np.float32))
        labels.append(int(label))
    return torch.from_numpy(np.stack(images)), torch.tensor(labels, dtype=torch.long)


def _model_loss(
    model: torch.nn.Module, images: torch.Tensor, labels: torch.Tensor, cfg: TrainConfig
) -> tuple[dict[str, torch.Tensor], DetectorOutput]:
    output = model(images)
    terms = detector_loss_terms(
        output,
        labels,
        target_images=images if output.reconstruction is not None else None,
        recon_weight=cfg.recon_weight,
        require_reconstruction=cfg.use_reconstruction_loss,
    )
    return terms, output


def evaluate_epoch(
    model: torch.nn.Module, val_set, batch_size: int = 32
) -> tuple[float, float]:
    """Mean loss and accuracy over a dataset; eval mode, no weight mutation."""
    if len(val_set) == 0:
        raise ValueError("evaluate_epoch: empty dataset")
    was_training = model.training
    model.eval()
    total_loss, correct = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(val_set), batch_size):
            idx = range(start, min(start + batch_size, len(val_set)))
            images, labels = _to_batch(val_set, idx)
            output = model(images)
            terms = detector_loss_terms(
                output,
                labels,
                target_images=images if output.reconstruction is not None else None,
            )
            total_loss += float(terms["total"]) * len(labels)
            correct += int((output.logits.argmax(dim=-1) == labels).sum())
    if was_training:
        model.train()
    return total_loss / len(val_set), correct / len(val_set)


def finetune(
    cfg: TrainConfig,
    train_set,
    val_set,
    model: Optional[torch.nn.Module] = None,
    log_path: Optional[str | Path] = None,
) -> FinetuneResult:
    """Run Adam fine-tuning and return the final (or last good) checkpoint.

    A checkpoint snapshot is written for every epoch listed in cfg.epochs
    when cfg.checkpoint_out is set. Non-finite or exploding loss aborts the
    run and returns the last completed epoch's state with diverged=True.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("finetune: train and validation sets must be non-empty")
    torch.manual_seed(cfg.seed)
    if model is None:
        model = create_detector(cfg.model, cfg.image_size).model
    if cfg.checkpoint_in:
        load_into(load_checkpoint(cfg.checkpoint_in), model)
    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=cfg.learning_rate,
        betas=(cfg.beta1, cfg.beta2),
        eps=cfg.adam_eps,
    )

    snapshot_epochs = sorted(set(cfg.epochs))
    total_epochs = snapshot_epochs[-1]
    history: list[EpochStats] = []
    saved: list[Path] = []
    config_echo = {
        "model": cfg.model,
        "image_size": cfg.image_size,
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "seed": cfg.seed,
    }

    def snapshot(epoch: int) -> Checkpoint:
        save_args = dict(
            model=model,
            optimizer=optimizer,
            config=config_echo,
            epoch=epoch,
            history=[vars(h) for h in history],
        )
        if cfg.checkpoint_out and (epoch in snapshot_epochs):
            out = Path(cfg.checkpoint_out)
            out.mkdir(parents=True, exist_ok=True)
            saved.append(
                save_checkpoint(out / f"{cfg.model}_epoch{epoch}.ckpt", **save_args)
            )
        tmp = {
            k: v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()
        }
        return Checkpoint(
            weights=tmp, config=config_echo, epoch=epoch, history=[vars(h) for h in history]
        )

    last_good = snapshot(0)  # pre-training state, in case epoch 1 diverges
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, total_epochs + 1):
            t0 = time.perf_counter()
            model.train()
            if hasattr(train_set, "set_epoch"):
                train_set.set_epoch(epoch)
            rng = np.random.default_rng(_epoch_seed(cfg.seed, epoch))
            order = rng.permutation(len(train_set))
            running, seen = 0.0, 0
            diverged = False
            for start in range(0, len(order), cfg.batch_size):
                images, labels = _to_batch(train_set, order[start : start + cfg.batch_size])
                optimizer.zero_grad()
                terms, _ = _model_loss(model, images, labels, cfg)
                loss = terms["total"]
                loss_value = float(loss.detach())
                if not math.isfinite(loss_value) or loss_value > DIVERGENCE_THRESHOLD:
                    diverged = True
                    break
                loss.backward()
                optimizer.step()
                running += loss_value * len(labels)
                seen += len(labels)
            if diverged:
                return FinetuneResult(
                    checkpoint=last_good, history=history, saved_paths=saved, diverged=True
                )
            val_loss, val_acc = evaluate_epoch(model, val_set, cfg.batch_size)
            stats = EpochStats(
                epoch=epoch,
                train_loss=running / max(seen, 1),
                val_loss=val_loss,
                val_acc=val_acc,
                wall_seconds=time.perf_counter() - t0,
            )
            history.append(stats)
            if log_fh:
                log_fh.write(json.dumps(vars(stats)) + "\n")
                log_fh.flush()
            last_good = snapshot(epoch)
    finally:
        if log_fh:
            log_fh.close()
    return FinetuneResult(
        checkpoint=last_good, history=history, saved_paths=saved, diverged=False
    )
