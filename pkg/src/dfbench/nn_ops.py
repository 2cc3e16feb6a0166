"""Reference implementations of the core neural-network primitives.

Everything here operates on plain numpy arrays at float64 and is written for
clarity and testability rather than speed: these functions define the exact
semantics (activations, losses, discrete convolution) that the torch-based
model code is checked against. Analytic gradients are provided for the losses
so that :func:`grad_check` can validate them against central finite
differences.

All functions are pure; none hold state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import erf

# Probabilities are clamped to at least EPS before any logarithm so that
# log(0) never occurs; see cross_entropy_loss for the 0*log(0) convention.
EPS = 1e-7

ArrayLike = np.ndarray | float | list


def _as_f64(x: ArrayLike) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


@dataclass
class LossValue:
    """A scalar loss plus a named breakdown for composite objectives."""

    value: float
    components: dict[str, float] = field(default_factory=dict)

    def __float__(self) -> float:
        return float(self.value)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


def sigmoid(x: ArrayLike) -> np.ndarray:
    """Elementwise logistic function 1 / (1 + e^(-x)).

    Uses the two-branch form so large-magnitude inputs do not overflow.
    """
    x = _as_f64(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: ArrayLike) -> np.ndarray:
    """Elementwise max(0, x)."""
    x = _as_f64(x)
    return np.maximum(0.0, x)


def gelu(x: ArrayLike) -> np.ndarray:
    """Elementwise x * 0.5 * (1 + erf(x / sqrt(2))), the exact erf form."""
    x = _as_f64(x)
    return x * 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


def leaky_relu(x: ArrayLike, slope: float) -> np.ndarray:
    """x for x >= 0, slope * x otherwise. slope must lie in (0, 1)."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu slope must be in (0, 1), got {slope}")
    x = _as_f64(x)
    return np.where(x >= 0.0, x, slope * x)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def _check_same_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def mse_loss(x: ArrayLike, x_hat: ArrayLike) -> LossValue:
    """Mean of squared elementwise differences between x and x_hat."""
    x, x_hat = _as_f64(x), _as_f64(x_hat)
    _check_same_shape(x, x_hat, "mse_loss")
    return LossValue(float(np.mean((x - x_hat) ** 2)))


def mse_grad(x: ArrayLike, x_hat: ArrayLike) -> np.ndarray:
    """Gradient of mse_loss with respect to the prediction x_hat."""
    x, x_hat = _as_f64(x), _as_f64(x_hat)
    _check_same_shape(x, x_hat, "mse_grad")
    return 2.0 * (x_hat - x) / x.size


def cross_entropy_loss(labels: ArrayLike, probs: ArrayLike) -> LossValue:
    """Binary cross entropy -mean[x log x' + (1-x) log(1-x')].

    The log arguments are clamped to at least EPS, and a term whose label
    multiplier is zero contributes exactly zero (the 0*log(0) convention), so
    a perfect prediction yields a loss of exactly 0.
    """
    labels, probs = _as_f64(labels), _as_f64(probs)
    _check_same_shape(labels, probs, "cross_entropy_loss")
    log_p = np.log(np.maximum(probs, EPS))
    log_q = np.log(np.maximum(1.0 - probs, EPS))
    term_pos = np.where(labels != 0.0, labels * log_p, 0.0)
    term_neg = np.where(labels != 1.0, (1.0 - labels) * log_q, 0.0)
    return LossValue(float(-np.mean(term_pos + term_neg)) + 0.0)


def cross_entropy_grad(labels: ArrayLike, probs: ArrayLike) -> np.ndarray:
    """Gradient of cross_entropy_loss with respect to probs.

    Valid away from the clamp boundaries (EPS < probs < 1 - EPS).
    """
    labels, probs = _as_f64(labels), _as_f64(probs)
    _check_same_shape(labels, probs, "cross_entropy_grad")
    p = np.clip(probs, EPS, 1.0 - EPS)
    return -(labels / p - (1.0 - labels) / (1.0 - p)) / labels.size


def kl_diag_gaussian(mu: ArrayLike, logvar: ArrayLike) -> LossValue:
    """KL divergence of N(mu, diag(e^logvar)) from the standard normal prior.

    Computed in closed form as -0.5 * sum(1 + logvar - mu^2 - e^logvar) over
    the last (latent) axis, then averaged over any leading batch axes. The
    encoder parameterizes log-variance, not sigma, for numerical stability.
    """
    mu, logvar = _as_f64(mu), _as_f64(logvar)
    _check_same_shape(mu, logvar, "kl_diag_gaussian")
    per_sample = -0.5 * np.sum(1.0 + logvar - mu**2 - np.exp(logvar), axis=-1)
    return LossValue(float(np.mean(per_sample)))


def kl_diag_gaussian_grad(
    mu: ArrayLike, logvar: ArrayLike
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of kl_diag_gaussian with respect to (mu, logvar)."""
    mu, logvar = _as_f64(mu), _as_f64(logvar)
    _check_same_shape(mu, logvar, "kl_diag_gaussian_grad")
    n_batch = int(np.prod(mu.shape[:-1])) if mu.ndim > 1 else 1
    g_mu = mu / n_batch
    g_logvar = -0.5 * (1.0 - np.exp(logvar)) / n_batch
    return g_mu, g_logvar


def log_likelihood_recon_loss(x: ArrayLike, x_hat: ArrayLike) -> LossValue:
    """Negative Gaussian log-likelihood reconstruction loss (unit variance).

    Exposed as the alternative to plain MSE for the reconstruction term; the
    default reconstruction loss everywhere else in the package is MSE.
    """
    x, x_hat = _as_f64(x), _as_f64(x_hat)
    _check_same_shape(x, x_hat, "log_likelihood_recon_loss")
    nll = 0.5 * np.mean((x - x_hat) ** 2) + 0.5 * np.log(2.0 * np.pi)
    return LossValue(float(nll))


def vae_total_loss(
    recon: LossValue | float, kl: LossValue | float, beta: float = 1.0
) -> LossValue:
    """recon + beta * kl with the component breakdown retained."""
    if beta < 0.0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    r, k = float(recon), float(kl)
    return LossValue(r + beta * k, components={"recon": r, "kl": k, "beta": beta})


def adversarial_losses(
    d_real: ArrayLike, d_fake: ArrayLike
) -> tuple[LossValue, LossValue]:
    """Discriminator and generator objective values of the adversarial game.

    Returns (D objective, G objective) where the discriminator maximizes
    mean log D(x) + mean log(1 - D(G(z))) and the generator minimizes
    mean log(1 - D(G(z))). Inputs are probabilities; they are clamped to
    [EPS, 1 - EPS] so the objectives stay finite at the boundaries.
    """
    d_real = np.clip(_as_f64(d_real), EPS, 1.0 - EPS)
    d_fake = np.clip(_as_f64(d_fake), EPS, 1.0 - EPS)
    real_term = float(np.mean(np.log(d_real)))
    fake_term = float(np.mean(np.log(1.0 - d_fake)))
    d_obj = LossValue(
        real_term + fake_term, components={"real": real_term, "fake": fake_term}
    )
    g_obj = LossValue(fake_term)
    return d_obj, g_obj


# ---------------------------------------------------------------------------
# Discrete convolution
# ---------------------------------------------------------------------------


def conv1d_reference(f: ArrayLike, g: ArrayLike) -> np.ndarray:
    """Full discrete convolution h(k) = sum_i f(i) * g(k - i).

    Output length is len(f) + len(g) - 1. Accumulation follows the defining
    sum directly (increasing i for each k) so results are reproducible
    bit-for-bit at float64.
    """
    f, g = _as_f64(f), _as_f64(g)
    if f.ndim != 1 or g.ndim != 1:
        raise ValueError("conv1d_reference expects rank-1 inputs")
    if f.size == 0 or g.size == 0:
        raise ValueError("conv1d_reference inputs must be non-empty")
    out = np.zeros(f.size + g.size - 1)
    for i in range(f.size):
        for j in range(g.size):
            out[i + j] += f[i] * g[j]
    return out


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def grad_check(
    fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x: ArrayLike,
    eps: float = 1e-5,
) -> float:
    """Compare a function's analytic gradient against central differences.

    ``fn(x)`` must return ``(value, grad)`` where grad has x's shape. Each
    component is perturbed by +/- eps and the analytic gradient is compared
    with (f(x+e) - f(x-e)) / (2 eps); the maximum relative error over all
    components is returned. Raises on non-finite function values.
    """
    x = np.array(x, dtype=np.float64)  # private contiguous copy to perturb
    value, analytic = fn(x)
    analytic = _as_f64(analytic)
    if not np.isfinite(value) or not np.all(np.isfinite(analytic)):
        raise ValueError("grad_check: non-finite value or gradient at x")
    if analytic.shape != x.shape:
        raise ValueError(
            f"grad_check: gradient shape {analytic.shape} != input shape {x.shape}"
        )
    numeric = np.empty_like(x)
    flat_x = x.reshape(-1)
    flat_num = numeric.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + eps
        f_plus, _ = fn(x)
        flat_x[i] = orig - eps
        f_minus, _ = fn(x)
        flat_x[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise ValueError("grad_check: non-finite value at perturbed point")
        flat_num[i] = (f_plus - f_minus) / (2.0 * eps)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
