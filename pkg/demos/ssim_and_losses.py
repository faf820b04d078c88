"""
Loss terms on small arrays
==========================

Walks through the three generator objectives on hand-made images: the SSIM
term, the cycle term and the least-squares adversarial term.
"""

import numpy as np

from uwcolor.autograd import Tensor, default_dtype
from uwcolor.losses import (
    LossWeights, adversarial_ls_d, adversarial_ls_g, cycle_loss, ssim_loss, ssim_map, total_generator_loss,
)

# Work in float64 so the printed numbers are exact to many digits.
with default_dtype("float64"):
    # Two flat patches: only the luminance factor of SSIM is active.
    flat_a = Tensor(np.full((1, 1, 16, 16), 0.5))
    flat_b = Tensor(np.full((1, 1, 16, 16), 0.25))
    print("SSIM of flat 0.5 vs flat 0.25:", ssim_map(flat_a, flat_b).data.mean())

    # A textured image against a darker copy of itself keeps most of its structure.
    rng = np.random.default_rng(0)
    yy, xx = np.mgrid[0:32, 0:32] / 32
    texture = 0.5 + 0.3 * np.sin(2 * np.pi * (2 * xx + yy))
    img = Tensor(np.stack([texture] * 3)[None])
    darker = Tensor(img.data * 0.6)
    noisy = Tensor(np.clip(img.data + rng.normal(0, 0.2, img.shape), 0, 1))
    print("SSIM vs darker copy:", round(float(ssim_map(img, darker).data.mean()), 4))
    print("SSIM vs noisy copy: ", round(float(ssim_map(img, noisy).data.mean()), 4))

    # The training losses take network-range images in [-1, 1].
    x = Tensor(img.data * 2 - 1)
    print("ssim_loss(x, x) =", ssim_loss(x, x).item())
    print("ssim_loss(x, darker) =", round(ssim_loss(x, Tensor(darker.data * 2 - 1)).item(), 4))

    # Cycle term: mean absolute reconstruction error, summed over both directions.
    print("cycle loss with a 0.1 offset on one side:", cycle_loss(x, x + 0.1, x, x).item())

    # Least-squares adversarial terms for a few discriminator outputs.
    for name, value in (("perfect", 1.0), ("undecided", 0.5), ("fooled", 0.0)):
        real = Tensor(np.full((1, 1, 30, 30), value))
        fake = Tensor(np.full((1, 1, 30, 30), 1.0 - value))
        print(f"{name:10s} D loss {adversarial_ls_d(real, fake).item():.3f}   G loss {adversarial_ls_g(fake).item():.3f}")

    # The total is a fixed weighting of the three terms.
    print("total with weights (1, 1, 10):", total_generator_loss(0.25, 0.1, 0.05, LossWeights()))
