"""Noise schedule, forward process, posterior, reverse sampler and training loss.

Schedule arrays are indexed by step ``t = 0..T`` with ``gamma[0] = 1`` (and
``beta[0] = 0``) so that the posterior is defined at ``t = 1``.

Notation follows the usual DDPM conventions: ``alpha = 1 - beta`` and
``gamma[t] = prod_{s <= t} alpha[s]``. The forward marginal is

    h_t = sqrt(gamma_t) h_0 + sqrt(1 - gamma_t) eps

and the denoiser ``net(l, h_t, gamma_t)`` predicts ``eps``.

By default the diffusion state lives in [-1, 1] (``signed=True``): clean
images in [0, 1] are mapped with ``2x - 1`` before noising and mapped back
(and clipped to [0, 1]) after sampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import ContractError, DimensionError
from .tensor import Tensor, mse, no_grad

BETA_MAX = 0.999

Net = Callable[[np.ndarray, np.ndarray, np.ndarray], object]


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        for name in ("beta", "alpha", "gamma"):
            arr = getattr(self, name)
            if arr.shape != (self.T + 1,):
                raise ContractError(f"{name} must have T + 1 = {self.T + 1} entries")
            arr.setflags(write=False)

    def check_step(self, t, low: int = 1) -> None:
        t = np.asarray(t)
        if t.size and (t.min() < low or t.max() > self.T):
            raise ContractError(f"step outside [{low}, {self.T}]")

    def posterior_variance(self, t: int) -> float:
        """beta_tilde_t = (1 - gamma_{t-1})(1 - alpha_t) / (1 - gamma_t)."""
        self.check_step(t)
        g, gp, a = self.gamma[t], self.gamma[t - 1], self.alpha[t]
        return (1.0 - gp) * (1.0 - a) / (1.0 - g)

    def rows(self):
        """(t, beta, alpha, gamma) for t = 0..T."""
        return zip(range(self.T + 1), self.beta, self.alpha, self.gamma)


def cosine_schedule(T: int = 2000, offset: float = 8e-3) -> NoiseSchedule:
    """Cosine schedule: ``f(t) = cos^2(((t/T + s) / (1 + s)) * pi/2)``.

    ``beta_t = min(1 - f(t)/f(t-1), 0.999)`` and ``gamma`` is the running
    product of ``1 - beta``, so ``gamma_t = f(t)/f(0)`` except at the few
    final steps where the clip is active.
    """
    if int(T) != T or T < 1:
        raise ContractError(f"T must be a positive integer, got {T}")
    if offset <= 0:
        raise ContractError(f"offset must be positive, got {offset}")
    T = int(T)
    t = np.arange(T + 1, dtype=np.float64)
    f = np.cos(((t / T + offset) / (1.0 + offset)) * (math.pi / 2.0)) ** 2
    ratio = f[1:] / f[:-1]
    beta = np.concatenate([[0.0], np.minimum(1.0 - ratio, BETA_MAX)])
    alpha = 1.0 - beta
    gamma = np.cumprod(alpha)
    return NoiseSchedule(T, beta, alpha, gamma)


@dataclass
class DiffusionState:
    h_t: np.ndarray
    t: np.ndarray
    eps: np.ndarray


def _per_sample(values: np.ndarray, t, like: np.ndarray) -> np.ndarray:
    """Index a schedule table by scalar or per-sample ``t`` and broadcast."""
    v = values[np.asarray(t)]
    if np.ndim(v) == 0:
        return v
    return v.reshape(v.shape + (1,) * (like.ndim - v.ndim))


def forward_diffuse(h0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Closed-form ``h_t = sqrt(gamma_t) h_0 + sqrt(1 - gamma_t) eps``.

    ``t`` may be an int or one step per leading-axis sample.
    """
    h0 = np.asarray(h0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if h0.shape != eps.shape:
        raise DimensionError(f"h0 {h0.shape} and eps {eps.shape} differ")
    sched.check_step(t)
    g = _per_sample(sched.gamma, t, h0)
    return np.sqrt(g) * h0 + np.sqrt(1.0 - g) * eps


def diffuse(h0: np.ndarray, t, sched: NoiseSchedule, rng: np.random.Generator) -> DiffusionState:
    eps = rng.standard_normal(np.shape(h0))
    return DiffusionState(forward_diffuse(h0, t, eps, sched), np.asarray(t), eps)


def compose_steps(h0: np.ndarray, t: int, sched: NoiseSchedule, rng: np.random.Generator) -> np.ndarray:
    """Run ``t`` single transitions ``h_s = sqrt(alpha_s) h_{s-1} + sqrt(beta_s) z``."""
    sched.check_step(t)
    h = np.array(h0, dtype=np.float64)
    for s in range(1, int(t) + 1):
        h = math.sqrt(sched.alpha[s]) * h + math.sqrt(sched.beta[s]) * rng.standard_normal(h.shape)
    return h


def posterior_coefficients(t: int, sched: NoiseSchedule) -> Tuple[float, float, float]:
    """(coefficient on h_t, coefficient on h_0, beta_tilde) of q(h_{t-1} | h_t, h_0)."""
    sched.check_step(t)
    a, g, gp = sched.alpha[t], sched.gamma[t], sched.gamma[t - 1]
    c_t = math.sqrt(a) * (1.0 - gp) / (1.0 - g)
    c_0 = math.sqrt(gp) * (1.0 - a) / (1.0 - g)
    return c_t, c_0, (1.0 - gp) * (1.0 - a) / (1.0 - g)


def posterior_params(h0: np.ndarray, ht: np.ndarray, t: int, sched: NoiseSchedule):
    """Mean and variance of the tractable posterior q(h_{t-1} | h_t, h_0)."""
    if t < 1:
        raise ContractError(f"posterior needs t >= 1, got {t}")
    c_t, c_0, beta_tilde = posterior_coefficients(t, sched)
    return c_t * np.asarray(ht, dtype=np.float64) + c_0 * np.asarray(h0, dtype=np.float64), beta_tilde


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def predicted_mean(ht: np.ndarray, eps_hat: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
    """``(h_t - (1 - alpha_t) / sqrt(1 - gamma_t) * eps_hat) / sqrt(alpha_t)``."""
    a, g = sched.alpha[t], sched.gamma[t]
    return (ht - ((1.0 - a) / math.sqrt(1.0 - g)) * eps_hat) / math.sqrt(a)


def predicted_clean(ht: np.ndarray, eps_hat: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
    """``(h_t - sqrt(1 - gamma_t) * eps_hat) / sqrt(gamma_t)``."""
    g = sched.gamma[t]
    return (ht - math.sqrt(1.0 - g) * eps_hat) / math.sqrt(g)


def reverse_step(
    l: np.ndarray,
    ht: np.ndarray,
    t: int,
    sched: NoiseSchedule,
    net: Net,
    rng: Optional[np.random.Generator] = None,
    clip_range: Optional[Tuple[float, float]] = None,
) -> np.ndarray:
    """One ancestral step from ``h_t`` to ``h_{t-1}``.

    Adds ``sqrt(beta_tilde_t) z`` for ``t > 1``; the final step returns the
    mean exactly. With ``clip_range`` the clean image implied by the
    predicted noise is clipped to that range and the mean is taken from the
    posterior instead; both agree whenever nothing is clipped.
    """
    sched.check_step(t)
    ht = np.asarray(ht, dtype=np.float64)
    gamma_t = np.full(ht.shape[:1] if ht.ndim == 4 else (1,), sched.gamma[t])
    with no_grad():
        eps_hat = _as_array(net(l, ht, gamma_t))
    if eps_hat.shape != ht.shape:
        raise DimensionError(f"net returned {eps_hat.shape}, expected {ht.shape}")
    if clip_range is not None:
        h0_hat = np.clip(predicted_clean(ht, eps_hat, t, sched), *clip_range)
        mu, _ = posterior_params(h0_hat, ht, t, sched)
    else:
        mu = predicted_mean(ht, eps_hat, t, sched)
    if t == 1:
        return mu
    if rng is None:
        raise ContractError("reverse_step needs an rng for t > 1")
    return mu + math.sqrt(sched.posterior_variance(t)) * rng.standard_normal(ht.shape)


def sample(
    l: np.ndarray,
    sched: NoiseSchedule,
    net: Net,
    rng: np.random.Generator,
    signed: bool = True,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
    clip_denoised: bool = False,
) -> np.ndarray:
    """Draw ``h_T ~ N(0, I)`` and run the reverse chain down to ``t = 1``.

    The result has the shape of ``l`` and is clipped to [0, 1].
    ``clip_denoised`` keeps every intermediate clean-image estimate inside
    the data range (see :func:`reverse_step`).
    """
    l = np.asarray(l, dtype=np.float64)
    bounds = ((-1.0, 1.0) if signed else (0.0, 1.0)) if clip_denoised else None
    h = rng.standard_normal(l.shape)
    for t in range(sched.T, 0, -1):
        h = reverse_step(l, h, t, sched, net, rng, bounds)
        if callback is not None:
            callback(t, h)
    img = (h + 1.0) / 2.0 if signed else h
    return np.clip(img, 0.0, 1.0)


def to_signed(img: np.ndarray) -> np.ndarray:
    return 2.0 * np.asarray(img, dtype=np.float64) - 1.0


def loss(
    net: Net,
    l: np.ndarray,
    h0: np.ndarray,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    signed: bool = True,
    t: Optional[np.ndarray] = None,
    eps: Optional[np.ndarray] = None,
) -> Tensor:
    """Noise-prediction MSE for a batch ``(N, ...)`` of clean images ``h0``.

    Draws one ``t ~ U{1..T}`` per sample and ``eps ~ N(0, I)`` unless they
    are supplied.
    """
    h0 = np.asarray(h0, dtype=np.float64)
    if signed:
        h0 = to_signed(h0)
    n = h0.shape[0]
    if t is None:
        t = rng.integers(1, sched.T + 1, size=n)
    t = np.asarray(t)
    if eps is None:
        eps = rng.standard_normal(h0.shape)
    ht = forward_diffuse(h0, t, eps, sched)
    gamma_t = np.broadcast_to(sched.gamma[t], (n,)).copy()
    pred = net(l, Tensor(ht), gamma_t)
    if not isinstance(pred, Tensor):
        pred = Tensor(pred)
    if pred.shape != eps.shape:
        raise DimensionError(f"net returned {pred.shape}, expected {eps.shape}")
    return mse(pred, Tensor(eps))
