"""Quick oracle and gradient suites runnable without a test harness."""

from __future__ import annotations

import math
import time
from typing import Callable

import numpy as np

from .autograd import Tensor, default_dtype, square
from .conv import conv2d, conv_transpose2d, instance_norm
from .gradcheck import check_gradients
from .losses import (
    SsimParams,
    adversarial_ls_d,
    adversarial_ls_g,
    cycle_loss,
    ssim_loss,
    ssim_map,
)
from .nets import PATCHGAN_LAYERS, ArchConfig, arch_preset, build_discriminator, build_generator, receptive_field
from .optim import AdamState, adam_step
from .trainer import ReplayBuffer


def brute_force_ssim(x: np.ndarray, y: np.ndarray, window: int = 13, c1: float = 0.02, c2: float = 0.03) -> np.ndarray:
    """Per-pixel SSIM of two H x W arrays by explicit patch extraction."""
    half = window // 2
    xp = np.pad(x, half, mode="reflect")
    yp = np.pad(y, half, mode="reflect")
    out = np.empty(x.shape)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            px = xp[i:i + window, j:j + window]
            py = yp[i:i + window, j:j + window]
            mx, my = px.mean(), py.mean()
            vx, vy = px.var(), py.var()
            cov = ((px - mx) * (py - my)).mean()
            out[i, j] = (2 * mx * my + c1) / (mx * mx + my * my + c1) * (2 * cov + c2) / (vx + vy + c2)
    return out


def suite_ssim_oracle() -> str:
    rng = np.random.default_rng(0)
    worst = 0.0
    with default_dtype("float64"):
        for _ in range(20):
            x, y = rng.random((16, 16)), rng.random((16, 16))
            fast = ssim_map(Tensor(x[None, None]), Tensor(y[None, None])).data[0, 0]
            worst = max(worst, float(np.abs(fast - brute_force_ssim(x, y)).max()))
        const = float(ssim_map(Tensor(np.full((1, 1, 16, 16), 0.5)), Tensor(np.full((1, 1, 16, 16), 0.25))).data.mean())
    assert worst < 1e-10, f"brute-force mismatch {worst:.2e}"
    assert abs(const - 0.27 / 0.3325) < 1e-12, f"constant patch {const}"
    return f"max dev {worst:.1e}, constant patch {const:.5f}"


def suite_gradients() -> str:
    rng = np.random.default_rng(1)
    results = {}
    with default_dtype("float64"):
        def t(*shape, lo=None, hi=None):
            data = rng.normal(size=shape) if lo is None else rng.uniform(lo, hi, shape)
            return Tensor(data, requires_grad=True)

        x, w, wt = t(1, 2, 6, 6), t(3, 2, 3, 3), t(2, 3, 3, 3)
        results["conv2d"] = check_gradients(lambda: square(conv2d(x, w, stride=2, padding_mode="reflect", pad=1)).sum(), [x, w])
        results["conv_transpose2d"] = check_gradients(
            lambda: square(conv_transpose2d(x, wt, stride=2, pad=1, output_padding=1)).sum(), [x, wt])
        g, b = t(2), t(2)
        results["instance_norm"] = check_gradients(lambda: (square(instance_norm(x, g, b)) * x).sum(), [x, g, b])
        a, c = t(1, 3, 16, 16, lo=-0.8, hi=0.8), t(1, 3, 16, 16, lo=-0.8, hi=0.8)
        results["ssim_loss"] = check_gradients(lambda: ssim_loss(a, c), [a, c])
        results["cycle_loss"] = check_gradients(lambda: cycle_loss(a, c, c, a * 0.5), [a, c])
        d1, d2 = t(1, 1, 6, 6), t(1, 1, 6, 6)
        results["adversarial_ls_g"] = check_gradients(lambda: adversarial_ls_g(d2), [d2])
        results["adversarial_ls_d"] = check_gradients(lambda: adversarial_ls_d(d1, d2), [d1, d2])
        # 16 px keeps a 4x4 bottleneck; at 2x2 instance norm is nearly degenerate
        net = build_generator(ArchConfig("toy", 4, 4, 1, 16), rng)
        xi = t(1, 3, 16, 16, lo=-1, hi=1)
        results["generator"] = check_gradients(lambda: square(net(xi) - 0.3).mean(), net.parameters() + [xi], max_entries=16)
    worst = max(results.values())
    assert worst < 1e-4, f"gradient errors {results}"
    return f"max relative error {worst:.1e} over {len(results)} checks"


def suite_architecture() -> str:
    cfg = arch_preset("default")
    rng = np.random.default_rng(0)
    d = build_discriminator(cfg, rng)
    with default_dtype("float32"):
        logits = d(Tensor(np.zeros((1, 3, 256, 256), dtype=np.float32)))
    rf = receptive_field(PATCHGAN_LAYERS)
    assert logits.shape == (1, 1, 30, 30), logits.shape
    assert rf == 70, rf
    return f"256 -> {logits.shape}, receptive field {rf}"


def suite_replay() -> str:
    buf = ReplayBuffer(50, seed=0)
    for i in range(50):
        img = Tensor(np.full((1, 1, 1, 1), float(i)))
        assert buf.query(img).data[0, 0, 0, 0] == i
    historical = 0
    n = 10_000
    for i in range(n):
        fresh = float(50 + i)
        if buf.query(Tensor(np.full((1, 1, 1, 1), fresh))).data[0, 0, 0, 0] != fresh:
            historical += 1
    frac = historical / n
    assert abs(frac - 0.5) <= 0.02, frac
    return f"historical fraction {frac:.4f}"


def suite_loss_identities() -> str:
    ones, zeros, half = (Tensor(np.full((1, 1, 30, 30), v)) for v in (1.0, 0.0, 0.5))
    assert adversarial_ls_d(ones, zeros).item() == 0.0
    assert adversarial_ls_g(zeros).item() == 1.0
    assert adversarial_ls_d(half, half).item() == 0.5
    assert adversarial_ls_g(half).item() == 0.25
    assert adversarial_ls_g(ones).item() == 0.0
    return "least-squares analytic cases exact"


def suite_adam() -> str:
    with default_dtype("float64"):
        theta = Tensor(np.array([0.7]), requires_grad=True)
        state = AdamState.for_params([theta], learning_rate=0.1, beta1=0.5, beta2=0.999, epsilon=1e-8)
        p, m, v = 0.7, 0.0, 0.0
        worst = 0.0
        for t in range(1, 11):
            g = 2 * p
            theta.grad = np.array([2 * theta.data[0]])
            adam_step([theta], state)
            m = 0.5 * m + 0.5 * g
            v = 0.999 * v + 0.001 * g * g
            p -= 0.1 * (m / (1 - 0.5 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
            worst = max(worst, abs(theta.data[0] - p))
    assert worst < 1e-12, worst
    return f"10-step recurrence max dev {worst:.1e}"


SUITES: dict[str, Callable[[], str]] = {
    "ssim-oracle": suite_ssim_oracle,
    "gradients": suite_gradients,
    "architecture": suite_architecture,
    "replay-buffer": suite_replay,
    "loss-identities": suite_loss_identities,
    "adam": suite_adam,
}


def run_selftest(print_fn=print) -> bool:
    ok = True
    for name, fn in SUITES.items():
        start = time.perf_counter()
        try:
            detail = fn()
            status = "PASS"
        except Exception as exc:  # report every suite, never stop early
            detail, status, ok = f"{type(exc).__name__}: {exc}", "FAIL", False
        print_fn(f"{status} {name:16s} {detail} ({time.perf_counter() - start:.1f}s)")
    return ok
