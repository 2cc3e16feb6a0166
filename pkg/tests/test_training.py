"""Training-loop tests: Adam oracle, determinism, divergence, sweeps."""

import json
import math

import numpy as np
import pytest
import torch
import torch.nn as nn

from dfbench import training as T
from dfbench.checkpoint import load_checkpoint
from dfbench.genconvit import DetectorOutput
from dfbench.synthetic import blob_dataset


def test_adam_single_step_matches_closed_form():
    """Hand-computed textbook Adam update on a two-parameter quadratic."""
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    w = torch.tensor([0.0, 0.0], dtype=torch.float64, requires_grad=True)
    opt = torch.optim.Adam([w], lr=lr, betas=(b1, b2), eps=eps)
    loss = 0.5 * (w[0] - 3.0) ** 2 + 2.0 * (w[1] + 1.0) ** 2
    loss.backward()
    grads = [float(g) for g in w.grad]  # d/dw0 = w0-3 = -3; d/dw1 = 4(w1+1) = 4
    assert grads == [-3.0, 4.0]
    opt.step()
    expected = []
    for w0, g in zip([0.0, 0.0], grads):
        m = (1 - b1) * g
        v = (1 - b2) * g * g
        m_hat = m / (1 - b1)
        v_hat = v / (1 - b2)
        expected.append(w0 - lr * m_hat / (math.sqrt(v_hat) + eps))
    got = [float(x) for x in w.detach()]
    assert abs(got[0] - expected[0]) < 1e-10
    assert abs(got[1] - expected[1]) < 1e-10


def test_default_train_configs():
    cfg = T.default_train_config("genconvit_ae")
    assert cfg.learning_rate == 1e-4 and cfg.batch_size == 32
    assert not cfg.use_reconstruction_loss
    cfg = T.default_train_config("genconvit_vae")
    assert cfg.learning_rate == 1e-4 and cfg.batch_size == 16
    assert cfg.use_reconstruction_loss
    cfg = T.default_train_config("meso4")
    assert cfg.learning_rate == 2e-4
    with pytest.raises(ValueError):
        T.TrainConfig(model="meso4", learning_rate=0.0)
    with pytest.raises(ValueError):
        T.TrainConfig(model="meso4", epochs=())


class BrightnessProbe(nn.Module):
    """Classifies by mean brightness; perfect on the blob datasets."""

    def __init__(self, scale=100.0):
        super().__init__()
        self.scale = nn.Parameter(torch.tensor(scale))

    def forward(self, x):
        mean = x.mean(dim=(1, 2, 3))
        logits = torch.stack([(0.5 - mean), (mean - 0.5)], dim=-1) * self.scale
        return DetectorOutput(logits=logits)


def test_evaluate_epoch_perfect_model():
    ds = blob_dataset(16, size=32, seed=0)
    model = BrightnessProbe()
    model.eval()
    loss1, acc1 = T.evaluate_epoch(model, ds)
    loss2, acc2 = T.evaluate_epoch(model, ds)
    assert acc1 == 1.0
    assert (loss1, acc1) == (loss2, acc2)
    assert 0.0 <= acc1 <= 1.0
    with pytest.raises(ValueError):
        T.evaluate_epoch(model, [])


def test_finetune_seeded_determinism(tmp_path):
    ds = blob_dataset(8, size=56, seed=1)
    cfg = T.TrainConfig(model="meso4", image_size=56, learning_rate=1e-3,
                        batch_size=4, epochs=(2,), seed=11)
    r1 = T.finetune(cfg, ds, ds)
    r2 = T.finetune(cfg, ds, ds)
    assert abs(r1.history[0].train_loss - r2.history[0].train_loss) < 1e-6
    assert r1.history[0].train_loss == r2.history[0].train_loss  # bit-identical
    for name in r1.checkpoint.weights:
        np.testing.assert_array_equal(
            r1.checkpoint.weights[name], r2.checkpoint.weights[name]
        )


def test_finetune_loss_finite_and_logged(tmp_path):
    ds = blob_dataset(8, size=56, seed=2)
    log_path = tmp_path / "log.jsonl"
    cfg = T.TrainConfig(model="meso4", image_size=56, learning_rate=1e-3,
                        batch_size=4, epochs=(2,), seed=0)
    result = T.finetune(cfg, ds, ds, log_path=log_path)
    assert not result.diverged
    assert len(result.history) == 2
    for stats in result.history:
        assert math.isfinite(stats.train_loss)
        assert math.isfinite(stats.val_loss)
    rows = [json.loads(line) for line in log_path.read_text().splitlines()]
    assert [r["epoch"] for r in rows] == [1, 2]
    assert set(rows[0]) == {"epoch", "train_loss", "val_loss", "val_acc",
                            "wall_seconds"}


def test_finetune_epoch_sweep_checkpoints(tmp_path):
    ds = blob_dataset(8, size=56, seed=3)
    cfg = T.TrainConfig(model="meso4", image_size=56, learning_rate=1e-3,
                        batch_size=4, epochs=(2, 4), seed=0,
                        checkpoint_out=str(tmp_path))
    result = T.finetune(cfg, ds, ds)
    assert len(result.saved_paths) == 2
    names = sorted(p.name for p in result.saved_paths)
    assert names == ["meso4_epoch2.ckpt", "meso4_epoch4.ckpt"]
    assert len(result.history) == 4  # trained through to max(epochs)
    ckpt = load_checkpoint(result.saved_paths[0])
    assert ckpt.epoch in (2, 4)
    assert ckpt.config["model"] == "meso4"


class Exploder(nn.Module):
    """Loss goes non-finite on the second step."""

    def __init__(self):
        super().__init__()
        self.w = nn.Parameter(torch.tensor(1.0))
        self.calls = 0

    def forward(self, x):
        self.calls += 1
        scale = 1.0 if self.calls == 1 else float("nan")
        logits = torch.stack([self.w * scale, -self.w], dim=-1).expand(x.shape[0], 2)
        return DetectorOutput(logits=logits)


def test_finetune_divergence_aborts_with_last_good():
    ds = blob_dataset(8, size=32, seed=4)
    cfg = T.TrainConfig(model="meso4", image_size=32, learning_rate=1e-3,
                        batch_size=4, epochs=(3,), seed=0)
    model = Exploder()
    result = T.finetune(cfg, ds, ds, model=model)
    assert result.diverged
    assert result.checkpoint is not None  # pre-divergence snapshot retained
    assert result.checkpoint.epoch == 0


def test_finetune_warm_start(tmp_path):
    ds = blob_dataset(16, size=56, seed=5)
    cfg = T.TrainConfig(model="meso4", image_size=56, learning_rate=1e-3,
                        batch_size=4, epochs=(6,), seed=0,
                        checkpoint_out=str(tmp_path))
    first = T.finetune(cfg, ds, ds)
    warm = T.TrainConfig(model="meso4", image_size=56, learning_rate=1e-3,
                         batch_size=4, epochs=(1,), seed=1,
                         checkpoint_in=str(first.saved_paths[0]))
    second = T.finetune(warm, ds, ds)
    # warm start continues from six-epoch weights, so its first-epoch loss is
    # well below a from-scratch first epoch
    assert second.history[0].train_loss < first.history[0].train_loss
