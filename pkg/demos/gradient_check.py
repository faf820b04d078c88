"""
Checking the hand-written gradients
===================================

Every layer has a closed-form backward pass. Central differences on a
float64 copy confirm them; probes that straddle a relu or abs kink are
skipped because the difference quotient there means nothing.
"""

import numpy as np

from uwcolor.autograd import Tensor, default_dtype, square
from uwcolor.conv import conv2d, instance_norm
from uwcolor.gradcheck import gradient_check
from uwcolor.losses import cycle_loss, ssim_loss
from uwcolor.nets import arch_preset, build_generator

rng = np.random.default_rng(3)

with default_dtype("float64"):
    x = Tensor(rng.normal(size=(1, 2, 8, 8)), requires_grad=True)
    w = Tensor(rng.normal(size=(4, 2, 3, 3)), requires_grad=True)
    g, b = Tensor(np.ones(4), requires_grad=True), Tensor(np.zeros(4), requires_grad=True)
    # plain mean(IN(h)^2) is ~1 whatever h is, so weight it to get a real gradient
    r = Tensor(rng.normal(size=(1, 4, 8, 8)))
    a = Tensor(rng.uniform(-0.8, 0.8, (1, 3, 16, 16)), requires_grad=True)
    c = Tensor(rng.uniform(-0.8, 0.8, (1, 3, 16, 16)), requires_grad=True)
    net = build_generator(arch_preset("toy", 16), rng)
    img = Tensor(rng.uniform(-1, 1, (1, 3, 16, 16)), requires_grad=True)

    checks = {
        "conv + instance norm": (lambda: (square(instance_norm(conv2d(x, w, pad=1), g, b)) * r).mean(), [x, w, g, b]),
        "ssim loss": (lambda: ssim_loss(a, c), [a, c]),
        "cycle loss": (lambda: cycle_loss(a, c, c, a), [a, c]),
        "toy generator": (lambda: square(net(img) - 0.2).mean(), net.parameters() + [img]),
    }
    for name, (fn, tensors) in checks.items():
        res = gradient_check(fn, tensors, max_entries=10, rng=rng)
        print(f"{name:22s} max rel. error {res.max_rel_error:.1e}  ({res.probed} probes, {res.skipped} at kinks)")
