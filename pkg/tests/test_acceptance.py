"""Acceptance criteria 1-8, one test each.

Every test prints a ``PASS``/``FAIL`` line (also collected into the terminal
summary). Criterion 6 trains the toy preset for 500 steps and takes a few
minutes on one CPU core.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from uwcolor.autograd import Tensor, default_dtype, square
from uwcolor.checkpoint import checkpoint_bytes, load_checkpoint, save_checkpoint
from uwcolor.config import toy_config
from uwcolor.conv import conv2d, conv_transpose2d, instance_norm
from uwcolor.data import make_toy_domains, scan_domains
from uwcolor.evaluate import evaluate_directory
from uwcolor.gradcheck import check_gradients
from uwcolor.losses import (
    LossWeights, adversarial_ls_d, adversarial_ls_g, cycle_loss, ssim_loss, ssim_map, total_generator_loss,
)
from uwcolor.nets import PATCHGAN_LAYERS, arch_preset, build_discriminator, build_generator, receptive_field
from uwcolor.optim import AdamState, adam_step
from uwcolor.selftest import brute_force_ssim
from uwcolor.trainer import ReplayBuffer, format_log_line, train


def verdict(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_1_ssim_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    with default_dtype("float64"):
        for _ in range(100):
            x, y = rng.random((16, 16)), rng.random((16, 16))
            fast = ssim_map(Tensor(x[None, None]), Tensor(y[None, None])).data[0, 0]
            worst = max(worst, float(np.abs(fast - brute_force_ssim(x, y)).max()))
        const = float(ssim_map(Tensor(np.full((1, 1, 16, 16), 0.5)), Tensor(np.full((1, 1, 16, 16), 0.25))).data.mean())
        # ssim_loss takes [-1, 1] images: 0.0 -> 0.5 and -0.5 -> 0.25
        loss = ssim_loss(Tensor(np.zeros((1, 1, 16, 16))), Tensor(np.full((1, 1, 16, 16), -0.5))).item()
    ok = worst <= 1e-10 and abs(const - 0.81203) <= 1e-5 and abs(loss - 0.18797) <= 1e-5
    verdict(1, "SSIM oracle", ok, f"max dev {worst:.1e}, constant {const:.6f}, loss {loss:.6f}")


def test_criterion_2_gradients():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    errors = {}
    with default_dtype("float64"):
        def t(*shape, lo=None, hi=None):
            return Tensor(rng.normal(size=shape) if lo is None else rng.uniform(lo, hi, shape), requires_grad=True)

        a, c = t(1, 3, 16, 16, lo=-0.8, hi=0.8), t(1, 3, 16, 16, lo=-0.8, hi=0.8)
        errors["ssim_loss"] = check_gradients(lambda: ssim_loss(a, c), [a, c], h=1e-4)
        errors["cycle_loss"] = check_gradients(lambda: cycle_loss(a, c, c, a * 0.5), [a, c], h=1e-4)
        d1, d2 = t(1, 1, 6, 6), t(1, 1, 6, 6)
        errors["adversarial_ls_g"] = check_gradients(lambda: adversarial_ls_g(d2), [d2], h=1e-4)
        errors["adversarial_ls_d"] = check_gradients(lambda: adversarial_ls_d(d1, d2), [d1, d2], h=1e-4)
        x, g, b = t(1, 2, 6, 6), t(2), t(2)
        errors["instance_norm"] = check_gradients(lambda: (square(instance_norm(x, g, b)) * x).sum(), [x, g, b], h=1e-4)
        w, wt = t(3, 2, 3, 3), t(2, 3, 3, 3)
        errors["conv2d"] = check_gradients(
            lambda: square(conv2d(x, w, stride=2, padding_mode="reflect", pad=1)).sum(), [x, w], h=1e-4)
        errors["conv_transpose2d"] = check_gradients(
            lambda: square(conv_transpose2d(x, wt, stride=2, pad=1, output_padding=1)).sum(), [x, wt], h=1e-4)
        net = build_generator(arch_preset("toy", 16), rng)
        xi = t(1, 3, 16, 16, lo=-1, hi=1)
        errors["toy generator"] = check_gradients(
            lambda: square(net(xi) - 0.3).mean(), net.parameters() + [xi], h=1e-4, max_entries=6, rng=rng)
    elapsed = time.perf_counter() - start
    name, worst = max(errors.items(), key=lambda kv: kv[1])
    verdict(2, "gradient suite", worst < 1e-4 and elapsed < 120,
            f"max relative error {worst:.1e} ({name}) over {len(errors)} checks in {elapsed:.0f}s")


def test_criterion_3_architecture():
    cfg = arch_preset("default")
    rng = np.random.default_rng(0)
    D, G = build_discriminator(cfg, rng), build_generator(cfg, rng)
    logits = D(Tensor(np.zeros((1, 3, 256, 256), np.float32))).shape
    rf = receptive_field(PATCHGAN_LAYERS)
    shapes = [G(Tensor(rng.uniform(-1, 1, (1, 3, s, s)).astype(np.float32))).shape for s in (256, 128)]
    ok = logits == (1, 1, 30, 30) and rf == 70 and shapes == [(1, 3, 256, 256), (1, 3, 128, 128)]
    verdict(3, "architecture arithmetic", ok, f"D 256 -> {logits}, receptive field {rf}, G {shapes}")


def test_criterion_4_replay_buffer():
    buf = ReplayBuffer(50, seed=99)
    warm = all(buf.query(Tensor(np.full((1, 1, 2, 2), float(i)))).data[0, 0, 0, 0] == i for i in range(50))
    n = 10_000
    historical = 0
    for i in range(n):
        fresh = float(1000 + i)
        historical += buf.query(Tensor(np.full((1, 1, 2, 2), fresh))).data[0, 0, 0, 0] != fresh
    frac = historical / n
    verdict(4, "replay buffer", warm and abs(frac - 0.5) <= 0.02, f"warm-up exact {warm}, historical fraction {frac:.4f}")


@pytest.fixture(scope="module")
def toy_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    train_dirs = make_toy_domains(root / "train", 64, 64, (0.3, 0.9, 1.0), seed=1)
    held_out = make_toy_domains(root / "held_out", 16, 64, (0.3, 0.9, 1.0), seed=2)
    return root, train_dirs, held_out


def test_criterion_5_determinism_and_checkpointing(toy_data, tmp_path):
    _, dirs, _ = toy_data
    ds = scan_domains(dirs["dir_x"], dirs["dir_y"], 64, seed=0)
    cfg = toy_config(steps=20, seed=0).with_overrides(train={"checkpoint_every": 10})
    runs = [train(cfg, ds, out_dir=tmp_path / f"run{i}") for i in range(2)]
    logs = [(tmp_path / f"run{i}" / "losses.tsv").read_bytes() for i in range(2)]
    same_logs = logs[0] == logs[1] and len(logs[0].splitlines()) == 21

    state = load_checkpoint(tmp_path / "run0" / "checkpoint_000010.ckpt")
    resumed = train(state.config, ds, state=state)
    resume_ok = [format_log_line(i, r) for i, r in enumerate(resumed.reports, 10)] == \
                [format_log_line(i, r) for i, r in enumerate(runs[0].reports[10:], 10)]
    resume_ok = resume_ok and checkpoint_bytes(resumed.state) == (tmp_path / "run0" / "final.ckpt").read_bytes()

    original = (tmp_path / "run0" / "final.ckpt").read_bytes()
    again = save_checkpoint(load_checkpoint(tmp_path / "run0" / "final.ckpt"), tmp_path / "again.ckpt").read_bytes()
    round_trip = again == original
    verdict(5, "determinism and checkpointing", same_logs and resume_ok and round_trip,
            f"identical 20-step logs {same_logs}, resume equals uninterrupted {resume_ok}, byte-identical round trip {round_trip}")


@pytest.fixture(scope="module")
def toy_run(toy_data):
    root, dirs, _ = toy_data
    ds = scan_domains(dirs["dir_x"], dirs["dir_y"], 64, seed=0)
    cfg = toy_config(steps=500, seed=0)
    start = time.perf_counter()
    result = train(cfg, ds, out_dir=root / "run")
    return result, time.perf_counter() - start


def test_criterion_6_toy_cast_removal(toy_data, toy_run):
    root, _, held = toy_data
    result, elapsed = toy_run
    cfg = result.state.config
    setup_ok = (cfg.arch.base_width, cfg.arch.n_res_blocks, cfg.optim.lr, cfg.optim.beta1, cfg.data.batch_size) == \
               (16, 1, 0.0002, 0.5, 1) and (cfg.loss.lambda_adv, cfg.loss.lambda_cyc, cfg.loss.lambda_ssim) == (1, 1, 10)
    summary = evaluate_directory(root / "run" / "final.ckpt", held["dir_x"], report=root / "held_out.tsv")
    ratio = summary.grayworld_ratio
    ok = setup_ok and summary.count == 16 and ratio <= 0.5 and summary.ssim_lum >= 0.8 and summary.cycle_l1 <= 0.1
    verdict(6, "toy cast removal", ok,
            f"gray-world {summary.grayworld_in:.4f} -> {summary.grayworld_out:.4f} (ratio {ratio:.3f}), "
            f"SSIM {summary.ssim_lum:.3f}, cycle L1 {summary.cycle_l1:.4f}, {elapsed:.0f}s training")


def test_criterion_7_loss_identities(toy_run):
    result, _ = toy_run
    w = LossWeights(1, 1, 10)
    worst = 0.0
    for r in result.reports:
        for total, adv, ssim in ((r.total_g_fwd, r.adv_g_fwd, r.ssim_fwd), (r.total_g_bwd, r.adv_g_bwd, r.ssim_bwd)):
            expected = total_generator_loss(adv, r.cyc, ssim, w)
            worst = max(worst, abs(total - expected) / abs(expected))
    ones, zeros, half = (Tensor(np.full((1, 1, 30, 30), v)) for v in (1.0, 0.0, 0.5))
    analytic = (adversarial_ls_d(ones, zeros).item(), adversarial_ls_d(half, half).item(), adversarial_ls_g(half).item())
    ok = worst <= 1e-6 and analytic == (0.0, 0.5, 0.25) and len(result.reports) == 500
    verdict(7, "loss identities", ok, f"max relative total error {worst:.1e} over {len(result.reports)} steps, "
                                      f"analytic cases {analytic}")


def test_criterion_8_adam_first_steps():
    lr, b1, b2, eps = 0.0002, 0.5, 0.999, 1e-8
    rng = np.random.default_rng(5)
    grads = rng.normal(size=10)
    with default_dtype("float64"):
        theta = Tensor(np.array([0.3]), requires_grad=True)
        state = AdamState.for_params([theta], learning_rate=lr, beta1=b1, beta2=b2, epsilon=eps)
        p, m, v, worst = 0.3, 0.0, 0.0, 0.0
        for step, g in enumerate(grads, start=1):
            theta.grad = np.array([g])
            adam_step([theta], state)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            p -= lr * (m / (1 - b1 ** step)) / (np.sqrt(v / (1 - b2 ** step)) + eps)
            worst = max(worst, abs(theta.data[0] - p))
    verdict(8, "ADAM recurrence", worst <= 1e-12, f"max deviation {worst:.1e} over 10 steps")
