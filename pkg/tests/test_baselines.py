"""Baseline detectors and registry tests."""

import pytest
import torch

from dfbench import baselines as BL
from dfbench.genconvit import DetectorOutput


def test_meso4_contract():
    torch.manual_seed(0)
    model = BL.Meso4(input_size=256)
    model.eval()
    with torch.no_grad():
        out = model(torch.rand(2, 3, 256, 256))
    assert isinstance(out, DetectorOutput)
    assert out.logits.shape == (2, 2)
    assert torch.isfinite(out.logits).all()


def test_meso4_parameter_budget():
    model = BL.Meso4(input_size=256)
    assert sum(p.numel() for p in model.parameters()) < 100_000


def test_meso4_shape_checks():
    model = BL.Meso4(input_size=256)
    with pytest.raises(ValueError):
        model(torch.rand(1, 3, 128, 128))
    with pytest.raises(ValueError):
        BL.Meso4(input_size=16)  # cannot survive 32x pooling


def test_meso4_single_image_squeeze():
    torch.manual_seed(0)
    model = BL.Meso4(input_size=56)
    model.eval()
    with torch.no_grad():
        out = model(torch.rand(3, 56, 56))
    assert out.logits.shape == (2,)


# ---------------------------------------------------------------------------
# Phase features
# ---------------------------------------------------------------------------


def test_phase_features_shape_and_channel_count():
    torch.manual_seed(0)
    x = torch.rand(2, 3, 32, 32)
    out = BL.spsl_phase_features(x)
    assert out.shape == (2, 4, 32, 32)
    torch.testing.assert_close(out[:, :3], x)  # RGB passes through
    assert float(out[:, 3].min()) >= 0.0 and float(out[:, 3].max()) <= 1.0


def test_phase_features_constant_image():
    x = torch.full((3, 16, 16), 0.37)
    out = BL.spsl_phase_features(x)
    phase = out[3]
    assert float(phase.max() - phase.min()) < 1e-6  # flat spectrum -> constant


def test_phase_features_brightness_invariance():
    torch.manual_seed(1)
    x = torch.rand(3, 32, 32) * 0.5
    p1 = BL.spsl_phase_features(x)[3]
    p2 = BL.spsl_phase_features(x * 2.0)[3]
    torch.testing.assert_close(p1, p2, atol=1e-6, rtol=0)


def test_phase_features_odd_dims_rejected():
    with pytest.raises(ValueError):
        BL.spsl_phase_features(torch.rand(3, 15, 16))


def test_spsl_detector_contract():
    torch.manual_seed(0)
    det = BL.SpslDetector(input_size=56)
    det.eval()
    with torch.no_grad():
        out = det(torch.rand(2, 3, 56, 56))
    assert out.logits.shape == (2, 2)
    assert torch.isfinite(out.logits).all()


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


def test_registry_known_names():
    names = BL.registry_names()
    assert names == sorted(names)
    for expected in ("genconvit_ae", "genconvit_vae", "meso4", "spsl",
                     "xception", "efficientnet_b4", "ucf"):
        assert expected in names


def test_registry_get_and_create():
    builder = BL.registry_get("meso4")
    handle = BL.create_detector("meso4", 56)
    assert isinstance(handle.model, BL.Meso4)
    assert handle.config == {"model": "meso4", "image_size": 56}
    assert type(builder(56)) is type(handle.model)


def test_registry_unknown_and_duplicate():
    with pytest.raises(KeyError, match="nope"):
        BL.registry_get("nope")
    with pytest.raises(ValueError, match="already registered"):
        BL.registry_register("meso4", lambda size: BL.Meso4(size))


def test_registry_reserved_names_raise():
    for name in ("xception", "efficientnet_b4", "ucf"):
        with pytest.raises(NotImplementedError, match="plug-in"):
            BL.create_detector(name, 256)


def test_registered_detectors_common_contract():
    x = torch.rand(2, 3, 56, 56)
    for name in ("genconvit_ae", "genconvit_vae", "meso4", "spsl"):
        torch.manual_seed(0)
        handle = BL.create_detector(name, 56)
        handle.model.eval()
        with torch.no_grad():
            first = handle(x)
            second = handle(x)
        assert first.logits.shape == (2, 2), name
        assert torch.isfinite(first.logits).all(), name
        assert torch.equal(first.logits, second.logits), name
