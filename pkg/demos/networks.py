"""
Generator and PatchGAN discriminator shapes
===========================================

Builds both network presets and shows what each one maps an image to.
"""

import numpy as np

from uwcolor.autograd import Tensor, no_grad
from uwcolor.nets import (
    PATCHGAN_LAYERS, arch_preset, build_discriminator, build_generator, discriminator_min_size,
    make_identity_generator, parameter_count, receptive_field,
)

rng = np.random.default_rng(0)

for preset in ("toy", "default"):
    cfg = arch_preset(preset)
    G, D = build_generator(cfg, rng), build_discriminator(cfg, rng)
    x = Tensor(rng.uniform(-1, 1, (1, 3, cfg.image_size, cfg.image_size)).astype(np.float32))
    with no_grad():
        y, logits = G(x), D(x)
    print(f"[{preset}] {cfg.image_size}px  G {parameter_count(G):,} params -> {y.shape}"
          f"   D {parameter_count(D):,} params -> {logits.shape}")

# Every output cell of the discriminator scores one 70 x 70 input patch.
print("receptive field:", receptive_field(PATCHGAN_LAYERS))
print("smallest image the discriminator accepts:", discriminator_min_size())

# A hand-wired generator that copies its input, useful as a sanity check.
G = make_identity_generator()
x = rng.uniform(-1, 1, (1, 3, 64, 64)).astype(np.float32)
with no_grad():
    diff = np.abs(G(Tensor(x)).data - x).max() / 2
print(f"identity generator max error in [0, 1] units: {diff:.4f}")
