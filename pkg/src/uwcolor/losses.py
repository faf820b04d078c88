"""Objective terms: windowed SSIM, cycle consistency, least-squares and
log-likelihood adversarial terms, and the weighted generator total."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields

import numpy as np

from .autograd import Tensor, as_tensor, abs_, clip, log, mean, square
from .conv import box_filter, pad_reflect

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
CHANNEL_MODES = ("luminance", "per-channel-mean")


@dataclass(frozen=True)
class LossWeights:
    adversarial: float = 1.0
    cycle: float = 1.0
    ssim: float = 10.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"loss weight {f.name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class SsimParams:
    window: int = 13
    c1: float = 0.02
    c2: float = 0.03
    channel_mode: str = "luminance"

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"SSIM window must be odd and >= 3, got {self.window}")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError(f"SSIM constants must be positive, got C1={self.c1}, C2={self.c2}")
        if self.channel_mode not in CHANNEL_MODES:
            raise ValueError(f"SSIM channel mode must be one of {CHANNEL_MODES}, got {self.channel_mode!r}")


@dataclass
class LossReport:
    adv_g_fwd: float
    adv_g_bwd: float
    adv_d_x: float
    adv_d_y: float
    cyc: float
    ssim_fwd: float
    ssim_bwd: float
    total_g_fwd: float
    total_g_bwd: float

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def values(self) -> list[float]:
        return [getattr(self, name) for name in self.field_names()]


def luminance(img: Tensor) -> Tensor:
    """BT.601 luma of an N x 3 x H x W image, kept as N x 1 x H x W."""
    r, g, b = LUMA_WEIGHTS
    return img[:, 0:1] * r + img[:, 1:2] * g + img[:, 2:3] * b


def _ssim_single(x: Tensor, y: Tensor, p: SsimParams) -> Tensor:
    half = p.window // 2
    xp, yp = pad_reflect(x, half), pad_reflect(y, half)
    mu_x = box_filter(xp, p.window)
    mu_y = box_filter(yp, p.window)
    var_x = box_filter(square(xp), p.window) - square(mu_x)
    var_y = box_filter(square(yp), p.window) - square(mu_y)
    cov = box_filter(xp * yp, p.window) - mu_x * mu_y
    lum = (2 * mu_x * mu_y + p.c1) / (square(mu_x) + square(mu_y) + p.c1)
    struct = (2 * cov + p.c2) / (var_x + var_y + p.c2)
    return lum * struct


def ssim_map(x, y, p: SsimParams = SsimParams(), check_range: bool = False) -> Tensor:
    """Per-pixel SSIM between two [0, 1] images over ``p.window`` square patches.

    Patch statistics are plain (box) means with population variances; borders
    are reflect-padded so the map covers every pixel. Three-channel inputs are
    reduced according to ``p.channel_mode``; the result is N x 1 x H x W.
    """
    x, y = as_tensor(x), as_tensor(y)
    if x.shape != y.shape:
        raise ValueError(f"ssim_map shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim != 4:
        raise ValueError(f"ssim_map expects N x C x H x W images, got {x.shape}")
    if min(x.shape[2:]) <= p.window // 2:
        raise ValueError(f"image {x.shape[2]}x{x.shape[3]} too small for a {p.window}x{p.window} window")
    if check_range:
        for name, t in (("x", x), ("y", y)):
            if t.data.min() < 0 or t.data.max() > 1:
                warnings.warn(f"ssim_map input {name} outside [0, 1]", RuntimeWarning, stacklevel=2)
    if x.shape[1] == 3 and p.channel_mode == "luminance":
        return _ssim_single(luminance(x), luminance(y), p)
    if x.shape[1] == 1:
        return _ssim_single(x, y, p)
    maps = _ssim_single(x, y, p)
    return mean(maps, axis=1, keepdims=True)


def to_unit_range(img):
    """Map network range [-1, 1] to [0, 1]."""
    return (img + 1.0) * 0.5


def ssim_loss(x, translated, p: SsimParams = SsimParams()) -> Tensor:
    """1 - mean SSIM between a source image and its translation, both in [-1, 1]."""
    return 1.0 - mean(ssim_map(to_unit_range(as_tensor(x)), to_unit_range(as_tensor(translated)), p))


def _check_pair(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what} shape mismatch: {a.shape} vs {b.shape}")


def cycle_loss(x, x_rec, y, y_rec) -> Tensor:
    """mean|F(G(x)) - x| + mean|G(F(y)) - y|."""
    x, x_rec, y, y_rec = map(as_tensor, (x, x_rec, y, y_rec))
    _check_pair(x, x_rec, "forward cycle")
    _check_pair(y, y_rec, "backward cycle")
    return mean(abs_(x_rec - x)) + mean(abs_(y_rec - y))


def adversarial_ls_g(d_fake) -> Tensor:
    """Generator side of the least-squares objective: mean((D(G(x)) - 1)^2)."""
    return mean(square(as_tensor(d_fake) - 1.0))


def adversarial_ls_d(d_real, d_fake) -> Tensor:
    """Discriminator side: mean((D(y) - 1)^2) + mean(D(G(x))^2), no 1/2 factor."""
    d_real, d_fake = as_tensor(d_real), as_tensor(d_fake)
    return mean(square(d_real - 1.0)) + mean(square(d_fake))


def adversarial_nll(d_real_probs, d_fake_probs, eps: float | None = None) -> Tensor:
    """E[log D(y)] + E[log(1 - D(G(x)))].

    This is the quantity the discriminator maximises (it is <= 0, with
    supremum 0). Probabilities are clamped to ``[eps, 1 - eps]``; values
    outside [0, 1] are rejected.
    """
    d_real_probs, d_fake_probs = as_tensor(d_real_probs), as_tensor(d_fake_probs)
    for name, t in (("real", d_real_probs), ("fake", d_fake_probs)):
        if not np.all(np.isfinite(t.data)) or t.data.min() < 0 or t.data.max() > 1:
            raise ValueError(f"{name} discriminator probabilities must lie in [0, 1]")
    if eps is None:
        eps = 1e-7 if d_real_probs.dtype == np.float32 else 1e-12
    real = clip(d_real_probs, eps, 1 - eps)
    fake = clip(d_fake_probs, eps, 1 - eps)
    return mean(log(real)) + mean(log(1.0 - fake))


def adversarial_nll_g(d_fake_probs, eps: float | None = None) -> Tensor:
    """Generator side of the log-likelihood objective, E[log(1 - D(G(x)))], to be minimised."""
    d_fake_probs = as_tensor(d_fake_probs)
    if eps is None:
        eps = 1e-7 if d_fake_probs.dtype == np.float32 else 1e-12
    return mean(log(1.0 - clip(d_fake_probs, eps, 1 - eps)))


def total_generator_loss(adv, cyc, ssim, w: LossWeights = LossWeights()):
    """Weighted sum adv*w.adversarial + cyc*w.cycle + ssim*w.ssim (tensors or floats)."""
    return adv * w.adversarial + cyc * w.cycle + ssim * w.ssim
