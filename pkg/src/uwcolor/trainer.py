"""Alternating optimisation of the two generators and two discriminators."""

from __future__ import annotations

import contextlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import autograd
from .autograd import Tensor, default_dtype, no_grad, sigmoid
from .config import TrainConfig
from .data import ImageBatch, UnpairedDataset, next_batch
from .losses import (
    LossReport,
    adversarial_ls_d,
    adversarial_ls_g,
    adversarial_nll,
    adversarial_nll_g,
    cycle_loss,
    ssim_loss,
    total_generator_loss,
)
from .nets import DiscriminatorNet, GeneratorNet, build_discriminator, build_generator
from .optim import AdamState, adam_step, seeded_rng, zero_grad

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class ReplayBuffer:
    """Pool of past generated images fed to a discriminator.

    Until the pool holds ``capacity`` images every query is stored and echoed
    back. Afterwards, half the time the fresh image is returned untouched;
    otherwise a random stored image is returned and the fresh one takes its slot.
    """

    def __init__(self, capacity: int = 50, rng=None, seed: int = 0):
        if capacity < 0:
            raise ValueError(f"replay capacity must be >= 0, got {capacity}")
        self.capacity = capacity
        self.pool: list[np.ndarray] = []
        self.rng = seeded_rng(seed) if rng is None else rng

    def __len__(self) -> int:
        return len(self.pool)

    def query(self, fresh: Tensor) -> Tensor:
        """Return a detached image (batch dimension kept) for the discriminator update."""
        out = []
        for img in fresh.data:
            img = img.copy()
            if self.capacity == 0:
                out.append(img)
            elif len(self.pool) < self.capacity:
                self.pool.append(img)
                out.append(img.copy())
            elif self.rng.random() < 0.5:
                out.append(img)
            else:
                idx = int(self.rng.integers(0, self.capacity))
                out.append(self.pool[idx])
                self.pool[idx] = img
        return Tensor(np.stack(out), dtype=fresh.dtype)


def replay_query(buffer: ReplayBuffer, fresh_image: Tensor) -> Tensor:
    return buffer.query(fresh_image)


@dataclass
class TrainState:
    config: TrainConfig
    G: GeneratorNet
    F: GeneratorNet
    D_X: DiscriminatorNet
    D_Y: DiscriminatorNet
    opt_G: AdamState
    opt_F: AdamState
    opt_D_X: AdamState
    opt_D_Y: AdamState
    buffer_X: ReplayBuffer
    buffer_Y: ReplayBuffer
    step: int = 0

    def networks(self) -> dict:
        return {"G": self.G, "F": self.F, "D_X": self.D_X, "D_Y": self.D_Y}

    def optimizers(self) -> dict:
        return {"G": self.opt_G, "F": self.opt_F, "D_X": self.opt_D_X, "D_Y": self.opt_D_Y}

    def buffers(self) -> dict:
        return {"X": self.buffer_X, "Y": self.buffer_Y}


def _adam(params, cfg: TrainConfig) -> AdamState:
    o = cfg.optim
    return AdamState.for_params(params, learning_rate=o.lr, beta1=o.beta1, beta2=o.beta2, epsilon=o.eps)


def init_state(config: TrainConfig) -> TrainState:
    """Fresh networks (N(0, 0.02) weights), optimisers and replay pools from ``config.train.seed``."""
    seq = np.random.SeedSequence(config.train.seed)
    init_seed, buf_x_seed, buf_y_seed = seq.spawn(3)
    rng = seeded_rng(init_seed)
    with default_dtype(config.train.dtype):
        G = build_generator(config.arch, rng)
        F = build_generator(config.arch, rng)
        D_X = build_discriminator(config.arch, rng)
        D_Y = build_discriminator(config.arch, rng)
    cap = config.train.buffer_capacity
    return TrainState(
        config, G, F, D_X, D_Y,
        _adam(G.parameters(), config), _adam(F.parameters(), config),
        _adam(D_X.parameters(), config), _adam(D_Y.parameters(), config),
        ReplayBuffer(cap, seeded_rng(buf_x_seed)), ReplayBuffer(cap, seeded_rng(buf_y_seed)),
    )


@contextlib.contextmanager
def run_context(config: TrainConfig):
    """Dtype, NaN checking and (when deterministic) single-threaded BLAS."""
    with contextlib.ExitStack() as stack:
        stack.enter_context(default_dtype(config.train.dtype))
        stack.enter_context(autograd.checked(config.train.checked))
        if config.train.deterministic:
            try:
                from threadpoolctl import threadpool_limits
            except ImportError:  # pragma: no cover
                log.warning("threadpoolctl missing; BLAS threading left as is")
            else:
                stack.enter_context(threadpool_limits(limits=1))
        yield


def _adv_g(d_logits: Tensor, kind: str) -> Tensor:
    if kind == "nll":
        return adversarial_nll_g(sigmoid(d_logits))
    return adversarial_ls_g(d_logits)


def _adv_d(d_real: Tensor, d_fake: Tensor, kind: str) -> Tensor:
    if kind == "nll":
        return -adversarial_nll(sigmoid(d_real), sigmoid(d_fake))
    return adversarial_ls_d(d_real, d_fake)


def _check(value: Tensor, name: str, step: int, checked: bool) -> float:
    v = float(value.item())
    if checked and not math.isfinite(v):
        raise TrainingError(f"non-finite {name} loss at step {step}")
    return v


def _discriminator_update(D: DiscriminatorNet, opt: AdamState, real: Tensor, fake: Tensor, kind: str) -> Tensor:
    params = D.parameters()
    zero_grad(params)
    loss = _adv_d(D(real), D(fake), kind)
    loss.backward()
    adam_step(params, opt)
    zero_grad(params)
    return loss


def training_step(state: TrainState, batch: ImageBatch) -> LossReport:
    """One round of updates: generators, then D_Y, then D_X.

    With ``train.alternation = "joint"`` G and F take one ADAM step together on
    the sum of both generator objectives (the shared cycle term counted once,
    which gives each network exactly the gradient of its own objective).
    ``"strict"`` instead steps G, D_Y, F, D_X in turn, recomputing the forward
    passes before F's update.
    """
    try:
        return _training_step(state, batch)
    except autograd.NonFiniteError as exc:
        raise TrainingError(f"{exc} at step {state.step}") from exc


def _training_step(state: TrainState, batch: ImageBatch) -> LossReport:
    cfg = state.config
    w, sp, kind = cfg.loss.weights, cfg.loss.ssim, cfg.loss.adversarial
    checked = cfg.train.checked
    step = state.step
    x, y = batch.x, batch.y
    G, F, D_X, D_Y = state.G, state.F, state.D_X, state.D_Y
    gen_params = G.parameters() + F.parameters()

    def generator_terms():
        fake_y, fake_x = G(x), F(y)
        cyc = cycle_loss(x, F(fake_y), y, G(fake_x))
        adv_fwd, adv_bwd = _adv_g(D_Y(fake_y), kind), _adv_g(D_X(fake_x), kind)
        ssim_fwd, ssim_bwd = ssim_loss(x, fake_y, sp), ssim_loss(y, fake_x, sp)
        return fake_y, fake_x, cyc, adv_fwd, adv_bwd, ssim_fwd, ssim_bwd

    zero_grad(gen_params)
    with frozen(D_X, D_Y):
        fake_y, fake_x, cyc, adv_fwd, adv_bwd, ssim_fwd, ssim_bwd = generator_terms()
    total_fwd = total_generator_loss(adv_fwd, cyc, ssim_fwd, w)
    total_bwd = total_generator_loss(adv_bwd, cyc, ssim_bwd, w)
    values = {
        "adv_g_fwd": _check(adv_fwd, "adv_g_fwd", step, checked),
        "adv_g_bwd": _check(adv_bwd, "adv_g_bwd", step, checked),
        "cyc": _check(cyc, "cyc", step, checked),
        "ssim_fwd": _check(ssim_fwd, "ssim_fwd", step, checked),
        "ssim_bwd": _check(ssim_bwd, "ssim_bwd", step, checked),
        "total_g_fwd": _check(total_fwd, "total_g_fwd", step, checked),
        "total_g_bwd": _check(total_bwd, "total_g_bwd", step, checked),
    }

    if cfg.train.alternation == "joint":
        joint = adv_fwd * w.adversarial + adv_bwd * w.adversarial + cyc * w.cycle + ssim_fwd * w.ssim + ssim_bwd * w.ssim
        joint.backward()
        adam_step(G.parameters(), state.opt_G)
        adam_step(F.parameters(), state.opt_F)
        zero_grad(gen_params)
        # discriminators never see graph-connected fakes
        values["adv_d_y"] = _check(_discriminator_update(D_Y, state.opt_D_Y, y, replay_query(state.buffer_Y, fake_y), kind), "adv_d_y", step, checked)
        values["adv_d_x"] = _check(_discriminator_update(D_X, state.opt_D_X, x, replay_query(state.buffer_X, fake_x), kind), "adv_d_x", step, checked)
    else:
        total_fwd.backward()
        adam_step(G.parameters(), state.opt_G)
        zero_grad(gen_params)
        values["adv_d_y"] = _check(_discriminator_update(D_Y, state.opt_D_Y, y, replay_query(state.buffer_Y, fake_y), kind), "adv_d_y", step, checked)
        zero_grad(gen_params)
        with frozen(D_X, D_Y):
            _, fake_x, cyc2, _, adv_bwd2, _, ssim_bwd2 = generator_terms()
        total_generator_loss(adv_bwd2, cyc2, ssim_bwd2, w).backward()
        adam_step(F.parameters(), state.opt_F)
        zero_grad(gen_params)
        values["adv_d_x"] = _check(_discriminator_update(D_X, state.opt_D_X, x, replay_query(state.buffer_X, fake_x), kind), "adv_d_x", step, checked)

    state.step += 1
    return LossReport(**{name: values[name] for name in LossReport.field_names()})


# -- loss log ---------------------------------------------------------------

LOG_HEADER = "step\t" + "\t".join(LossReport.field_names())


def format_log_line(step: int, report: LossReport) -> str:
    # repr is the shortest round-tripping form, so equal logs mean equal floats
    return f"{step}\t" + "\t".join(repr(v) for v in report.values())


def parse_log(text: str) -> list[tuple[int, LossReport]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != LOG_HEADER:
        raise ValueError("loss log is missing its header row")
    out = []
    for ln in lines[1:]:
        step, *vals = ln.split("\t")
        out.append((int(step), LossReport(*map(float, vals))))
    return out


@dataclass
class TrainResult:
    state: TrainState
    reports: list[LossReport] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    log_path: Path | None = None


def train(config: TrainConfig, dataset: UnpairedDataset, out_dir=None, state: TrainState | None = None,
          callback: Callable[[int, LossReport], None] | None = None) -> TrainResult:
    """Run ``training_step`` until ``config.train.steps`` total steps.

    When ``out_dir`` is given, a tab-separated loss log (``losses.tsv``, one row
    per step, header :data:`LOG_HEADER`) is appended to, and checkpoints are
    written every ``checkpoint_every`` steps plus at the end. Passing a
    restored ``state`` continues from its step counter.
    """
    from .checkpoint import save_checkpoint

    if state is None:
        state = init_state(config)
    if dataset.image_size != config.arch.image_size:
        raise TrainingError(f"dataset image size {dataset.image_size} != arch.image_size {config.arch.image_size}")
    result = TrainResult(state)
    log_file = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.log_path = out_dir / "losses.tsv"
        log_file = _open_log(result.log_path, state.step)
    spe = dataset.steps_per_epoch
    every = config.train.checkpoint_every
    try:
        with run_context(config):
            while state.step < config.train.steps:
                epoch, pos = divmod(state.step, spe)
                batch = next_batch(dataset, epoch, pos, dtype=config.train.dtype)
                if config.data.hflip:
                    batch = _flip(batch, config.train.seed, epoch, pos)
                step = state.step
                report = training_step(state, batch)
                result.reports.append(report)
                if log_file is not None:
                    log_file.write(format_log_line(step, report) + "\n")
                    log_file.flush()
                if callback is not None:
                    callback(step, report)
                if out_dir is not None and every and state.step % every == 0 and state.step < config.train.steps:
                    result.checkpoints.append(save_checkpoint(state, out_dir / f"checkpoint_{state.step:06d}.ckpt"))
    finally:
        if log_file is not None:
            log_file.close()
    if out_dir is not None:
        result.checkpoints.append(save_checkpoint(state, out_dir / "final.ckpt"))
    return result


def _open_log(path: Path, start_step: int):
    """Open the loss log for appending, dropping rows at or past ``start_step``."""
    rows = []
    if path.exists() and start_step > 0:
        rows = [ln for ln in path.read_text().splitlines()[1:] if ln.strip() and int(ln.split("\t", 1)[0]) < start_step]
    fh = path.open("w")
    fh.write(LOG_HEADER + "\n")
    for ln in rows:
        fh.write(ln + "\n")
    fh.flush()
    return fh


def _flip(batch: ImageBatch, seed: int, epoch: int, step: int) -> ImageBatch:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, epoch, step, 7])))
    fx, fy = rng.random(2) < 0.5
    x = Tensor(batch.x.data[..., ::-1].copy()) if fx else batch.x
    y = Tensor(batch.y.data[..., ::-1].copy()) if fy else batch.y
    return ImageBatch(x, y, batch.x_ids, batch.y_ids)


def parameter_digest(net) -> str:
    import hashlib

    h = hashlib.sha256()
    for name, t in net.named_parameters():
        h.update(name.encode())
        h.update(np.ascontiguousarray(t.data).tobytes())
    return h.hexdigest()


@contextlib.contextmanager
def frozen(*nets):
    """Temporarily stop tracking gradients for the given networks' parameters."""
    saved = [(t, t.requires_grad) for n in nets for t in n.parameters()]
    for t, _ in saved:
        t.requires_grad = False
    try:
        yield
    finally:
        for t, flag in saved:
            t.requires_grad = flag


__all__ = [
    "ReplayBuffer", "TrainState", "TrainResult", "TrainingError", "init_state", "replay_query",
    "training_step", "train", "run_context", "format_log_line", "parse_log", "LOG_HEADER",
    "parameter_digest", "frozen", "no_grad",
]
