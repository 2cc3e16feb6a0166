"""Dual-network detector tests: shape chains, determinism, losses, VAE stats."""

import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from dfbench import genconvit as G
from dfbench.synthetic import blob_image


@pytest.fixture(scope="module")
def desk_nets():
    torch.manual_seed(0)
    cfg = G.desk_config()
    a = G.NetworkA(cfg)
    b = G.NetworkB(cfg)
    a.eval(), b.eval()
    return cfg, a, b


def desk_image(seed=0, batch=None):
    rng = np.random.default_rng(seed)
    if batch is None:
        return torch.from_numpy(blob_image(rng, 56, bright=True))
    return torch.stack(
        [torch.from_numpy(blob_image(rng, 56, bright=i % 2 == 0)) for i in range(batch)]
    )


# ---------------------------------------------------------------------------
# Configs
# ---------------------------------------------------------------------------


def test_ae_config_validation():
    with pytest.raises(ValueError):
        G.AEConfig(input_size=56)  # 56 / 2^5 is not an integer
    with pytest.raises(ValueError):
        G.AEConfig(encoder_channels=(8, 16, 32))  # must be 5 stages
    cfg = G.AEConfig()
    assert cfg.latent_shape == (256, 7, 7)
    desk = G.desk_config().ae
    assert desk.latent_shape == (64, 7, 7)


def test_vae_config_validation():
    cfg = G.VAEConfig()
    assert cfg.latent_dim == 12544
    assert cfg.recon_size == 112
    with pytest.raises(ValueError):
        G.VAEConfig(encoder_channels=(8, 16, 32))
    with pytest.raises(ValueError):
        G.VAEConfig(recon_size=100)  # not latent_spatial * 2^k


# ---------------------------------------------------------------------------
# Autoencoder
# ---------------------------------------------------------------------------


def test_ae_encode_decode_shapes(desk_nets):
    cfg, a, _ = desk_nets
    ae = a.autoencoder
    x = desk_image(0)
    with torch.no_grad():
        z = ae.encode(x)
        assert z.shape == cfg.ae.latent_shape
        x4 = desk_image(0, batch=4)
        z4 = ae.encode(x4)
        assert z4.shape == (4,) + cfg.ae.latent_shape
        recon = ae.decode(z)
    assert recon.shape == x.shape
    assert float(recon.min()) >= 0.0 and float(recon.max()) <= 1.0


def test_ae_shape_errors(desk_nets):
    _, a, _ = desk_nets
    with pytest.raises(ValueError):
        a.autoencoder.encode(torch.rand(3, 28, 28))
    with pytest.raises(ValueError):
        a.autoencoder.decode(torch.rand(16, 7, 7))


def test_ae_single_image_overfit():
    torch.manual_seed(0)
    ae = G.ConvAutoencoder(G.desk_config().ae)
    img = desk_image(3).unsqueeze(0)
    opt = torch.optim.Adam(ae.parameters(), lr=3e-3)
    for _ in range(400):
        opt.zero_grad()
        loss = F.mse_loss(ae(img), img)
        loss.backward()
        opt.step()
    assert float(loss.detach()) < 1e-2


# ---------------------------------------------------------------------------
# VAE
# ---------------------------------------------------------------------------


def test_vae_encode_decode_shapes(desk_nets):
    cfg, _, b = desk_nets
    vae = b.vae
    x = desk_image(1)
    with torch.no_grad():
        mu, logvar = vae.encode(x)
        assert mu.shape == logvar.shape == (cfg.vae.latent_dim,)
        mu2, logvar2 = vae.encode(x)
        torch.testing.assert_close(mu, mu2)  # deterministic in eval mode
        torch.testing.assert_close(logvar, logvar2)
        mub, _ = vae.encode(desk_image(1, batch=2))
        assert mub.shape == (2, cfg.vae.latent_dim)
        recon = vae.decode(mu)
        assert recon.shape == (3, cfg.vae.recon_size, cfg.vae.recon_size)
        assert float(recon.min()) >= 0.0 and float(recon.max()) <= 1.0
        torch.testing.assert_close(vae.decode(mu), recon)  # decode deterministic
    with pytest.raises(ValueError):
        vae.decode(torch.rand(cfg.vae.latent_dim + 1))


def test_vae_single_image_overfit():
    torch.manual_seed(0)
    cfg = G.desk_config().vae
    vae = G.ConvVae(cfg)
    img = desk_image(4).unsqueeze(0)
    target = F.interpolate(
        img, size=(cfg.recon_size, cfg.recon_size), mode="bilinear", align_corners=False
    )
    opt = torch.optim.Adam(vae.parameters(), lr=3e-3)
    for _ in range(300):
        opt.zero_grad()
        mu, _ = vae.encode(img)
        loss = F.mse_loss(vae.decode(mu), target)
        loss.backward()
        opt.step()
    assert float(loss.detach()) < 1e-2


def test_reparameterize():
    mu = torch.tensor([1.0, -2.0, 0.5])
    logvar = torch.zeros(3)
    z = G.reparameterize(mu, logvar, torch.zeros(3))
    torch.testing.assert_close(z, mu)
    z = G.reparameterize(mu, logvar, torch.ones(3))
    torch.testing.assert_close(z, mu + 1.0)
    with pytest.raises(ValueError):
        G.reparameterize(mu, logvar, torch.zeros(4))


def test_reparameterize_monte_carlo_mean():
    torch.manual_seed(7)
    n = 10_000
    mu = torch.tensor([0.3, -1.0])
    logvar = torch.tensor([0.2, -0.4])
    sigma = torch.exp(0.5 * logvar)
    noise = torch.randn(n, 2)
    z = G.reparameterize(mu.expand(n, 2), logvar.expand(n, 2), noise)
    bound = 3.0 * sigma / math.sqrt(n)
    assert torch.all((z.mean(dim=0) - mu).abs() <= bound)


# ---------------------------------------------------------------------------
# Networks
# ---------------------------------------------------------------------------


def test_network_a_forward(desk_nets):
    _, a, _ = desk_nets
    x = desk_image(5, batch=2)
    with torch.no_grad():
        out = a(x)
    assert out.logits.shape == (2, 2)
    assert torch.isfinite(out.logits).all()
    assert out.reconstruction is None
    with torch.no_grad():
        out = a(x, include_reconstruction=True)
    assert out.reconstruction.shape == x.shape


def test_network_a_reconstruction_ablation(desk_nets):
    _, a, _ = desk_nets
    x = desk_image(6, batch=1)
    with torch.no_grad():
        recon = a.autoencoder(x)
        logits = a.classify_pair(x, recon)
        ablated = a.classify_pair(x, torch.zeros_like(recon))
    assert not torch.allclose(logits, ablated)


def test_network_b_forward(desk_nets):
    cfg, _, b = desk_nets
    x = desk_image(7, batch=2)
    with torch.no_grad():
        out = b(x)
    assert out.logits.shape == (2, 2)
    assert out.reconstruction.shape == (2, 3, cfg.vae.recon_size, cfg.vae.recon_size)
    assert out.latent_mu.shape == (2, cfg.vae.latent_dim)
    assert out.latent_logvar.shape == (2, cfg.vae.latent_dim)


def test_eval_mode_determinism(desk_nets):
    _, a, b = desk_nets
    x = desk_image(8, batch=2)
    with torch.no_grad():
        la1, la2 = a(x).logits, a(x).logits
        lb1, lb2 = b(x).logits, b(x).logits
    assert torch.equal(la1, la2)
    assert torch.equal(lb1, lb2)  # zero noise in eval mode


def test_canonical_shape_chain():
    torch.manual_seed(0)
    cfg = G.canonical_config()
    a = G.NetworkA(cfg)
    b = G.NetworkB(cfg)
    a.eval(), b.eval()
    x = torch.rand(1, 3, 224, 224)
    with torch.no_grad():
        z = a.autoencoder.encode(x)
        assert z.shape == (1, 256, 7, 7)
        recon = a.autoencoder.decode(z)
        assert recon.shape == (1, 3, 224, 224)
        mu, logvar = b.vae.encode(x)
        assert mu.shape == logvar.shape == (1, 12544)
        out_b = b(x)
        assert out_b.reconstruction.shape == (1, 3, 112, 112)
        out_a = a(x)
    assert out_a.logits.shape == out_b.logits.shape == (1, 2)


# ---------------------------------------------------------------------------
# Prediction combination
# ---------------------------------------------------------------------------


def logits_for(p):
    # logits (0, logit(p)) give softmax fake-probability exactly p
    return torch.tensor([[0.0, math.log(p / (1.0 - p))]])


def test_fake_probability_softmax():
    out = G.DetectorOutput(logits=torch.tensor([[1.0, 3.0], [0.0, 0.0]]))
    probs = torch.softmax(out.logits, dim=-1)
    torch.testing.assert_close(
        probs.sum(dim=-1), torch.ones(2), atol=1e-6, rtol=0
    )
    torch.testing.assert_close(G.fake_probability(out), probs[:, 1])


def test_combined_predict_modes():
    out_a = G.DetectorOutput(logits=logits_for(0.8))
    out_b = G.DetectorOutput(logits=logits_for(0.6))
    assert float(G.combined_predict(out_a, out_b, "avg")) == pytest.approx(0.7, abs=1e-6)
    assert float(G.combined_predict(out_a, out_b, "max")) == pytest.approx(0.8, abs=1e-6)
    assert float(G.combined_predict(out_a, out_b, "a_only")) == pytest.approx(0.8, abs=1e-6)
    assert float(G.combined_predict(out_a, out_b, "b_only")) == pytest.approx(0.6, abs=1e-6)
    # avg is symmetric in its arguments
    ab = G.combined_predict(out_a, out_b, "avg")
    ba = G.combined_predict(out_b, out_a, "avg")
    torch.testing.assert_close(ab, ba)
    with pytest.raises(ValueError):
        G.combined_predict(out_a, out_b, "median")


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def test_network_losses_ce_only():
    logits = torch.tensor([[10.0, -10.0], [-10.0, 10.0]])
    labels = torch.tensor([0, 1])
    out = G.DetectorOutput(logits=logits)
    loss = G.network_losses(out, labels)
    assert loss.value == pytest.approx(0.0, abs=1e-6)
    assert set(loss.components) == {"ce"}


def test_network_losses_ce_plus_mse(desk_nets):
    cfg, _, b = desk_nets
    x = desk_image(9, batch=2)
    labels = torch.tensor([0, 1])
    with torch.no_grad():
        out = b(x)
    loss = G.network_losses(out, labels, target_images=x)
    assert set(loss.components) == {"ce", "mse"}
    assert loss.value == pytest.approx(
        loss.components["ce"] + loss.components["mse"], rel=1e-6
    )
    # target was downsampled to the reconstruction's resolution
    target = F.interpolate(x, size=out.reconstruction.shape[-2:], mode="bilinear",
                           align_corners=False)
    expected_mse = float(F.mse_loss(out.reconstruction, target))
    assert loss.components["mse"] == pytest.approx(expected_mse, rel=1e-6)


def test_network_losses_errors(desk_nets):
    _, _, b = desk_nets
    x = desk_image(10, batch=1)
    with torch.no_grad():
        out = b(x)
    with pytest.raises(ValueError, match="target images"):
        G.network_losses(out, torch.tensor([1]))
    plain = G.DetectorOutput(logits=torch.zeros(1, 2))
    with pytest.raises(ValueError, match="reconstruction"):
        G.network_losses(plain, torch.tensor([1]), require_reconstruction=True)


def test_network_loss_grad_slice_desk():
    """Finite differences vs autograd on a small random parameter slice."""
    from dfbench.nn_ops import grad_check

    torch.manual_seed(0)
    b = G.NetworkB(G.desk_config()).double().eval()
    x = desk_image(11, batch=1).double()
    labels = torch.tensor([1])
    params = [p for p in b.parameters() if p.requires_grad]
    rng = np.random.default_rng(0)
    picks = []  # (param, flat_index)
    for _ in range(4):
        p = params[int(rng.integers(len(params)))]
        picks.append((p, int(rng.integers(p.numel()))))

    def fn(values):
        with torch.no_grad():
            for (p, j), v in zip(picks, values):
                p.view(-1)[j] = float(v)
        for p in params:
            p.grad = None
        out = b(x, noise=torch.zeros_like(b.vae.encode(x)[0]))
        terms = G.detector_loss_terms(out, labels, target_images=x)
        terms["total"].backward()
        grad = np.array([float(p.grad.view(-1)[j]) for p, j in picks])
        return float(terms["total"].detach()), grad

    start = np.array([float(p.detach().view(-1)[j]) for p, j in picks])
    assert grad_check(fn, start, eps=1e-5) < 1e-3
