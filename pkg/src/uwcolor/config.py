"""Experiment configuration and its INI-style file format.

Files have the sections ``[data]``, ``[arch]``, ``[loss]``, ``[optim]`` and
``[train]``. Every key is optional; unknown sections or keys are errors.
When ``[arch] preset`` is given, the preset supplies the architecture
defaults and explicit keys override it.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .losses import CHANNEL_MODES, LossWeights, SsimParams
from .nets import NORMS, ArchConfig, arch_preset


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    batch_size: int = 1
    hflip: bool = False


@dataclass
class LossConfig:
    lambda_adv: float = 1.0
    lambda_cyc: float = 1.0
    lambda_ssim: float = 10.0
    ssim_window: int = 13
    ssim_c1: float = 0.02
    ssim_c2: float = 0.03
    ssim_channel_mode: str = "luminance"
    adversarial: str = "least_squares"

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_adv, self.lambda_cyc, self.lambda_ssim)

    @property
    def ssim(self) -> SsimParams:
        return SsimParams(self.ssim_window, self.ssim_c1, self.ssim_c2, self.ssim_channel_mode)


@dataclass
class OptimConfig:
    lr: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class RunConfig:
    steps: int = 500
    seed: int = 0
    buffer_capacity: int = 50
    checkpoint_every: int = 100
    alternation: str = "joint"
    deterministic: bool = True
    checked: bool = False
    dtype: str = "float32"


@dataclass
class TrainConfig:
    data: DataConfig = field(default_factory=DataConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    train: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        validate(self)

    def with_overrides(self, **sections) -> "TrainConfig":
        """``cfg.with_overrides(train={"steps": 20})`` returns a validated copy."""
        parts = {}
        for f in fields(self):
            current = getattr(self, f.name)
            parts[f.name] = replace(current, **sections.get(f.name, {}))
        unknown = set(sections) - set(parts)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        return TrainConfig(**parts)


SECTIONS = ("data", "arch", "loss", "optim", "train")


def toy_config(steps: int = 500, seed: int = 0, image_size: int = 64) -> TrainConfig:
    """Desk-scale preset: toy networks at 64 px with the standard optimiser settings (lr 0.0002, beta1 0.5, batch 1)."""
    return TrainConfig(arch=arch_preset("toy", image_size), train=RunConfig(steps=steps, seed=seed))


def validate(cfg: TrainConfig) -> None:
    def positive(section, name, value):
        if not (math.isfinite(value) and value > 0):
            raise ConfigError(f"{section}.{name} must be positive, got {value}")

    positive("data", "batch_size", cfg.data.batch_size)
    try:
        ArchConfig.__post_init__(cfg.arch)
        cfg.loss.weights
        cfg.loss.ssim
        if cfg.arch.norm not in NORMS:
            raise ValueError(f"arch.norm must be one of {NORMS}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.loss.adversarial not in ("least_squares", "nll"):
        raise ConfigError(f"loss.adversarial must be 'least_squares' or 'nll', got {cfg.loss.adversarial!r}")
    positive("optim", "lr", cfg.optim.lr)
    positive("optim", "eps", cfg.optim.eps)
    for name in ("beta1", "beta2"):
        value = getattr(cfg.optim, name)
        if not 0 < value < 1:
            raise ConfigError(f"optim.{name} must lie in (0, 1), got {value}")
    if cfg.train.steps < 0:
        raise ConfigError(f"train.steps must be >= 0, got {cfg.train.steps}")
    if cfg.train.buffer_capacity < 0:
        raise ConfigError(f"train.buffer_capacity must be >= 0, got {cfg.train.buffer_capacity}")
    if cfg.train.checkpoint_every < 0:
        raise ConfigError(f"train.checkpoint_every must be >= 0, got {cfg.train.checkpoint_every}")
    if cfg.train.alternation not in ("joint", "strict"):
        raise ConfigError(f"train.alternation must be 'joint' or 'strict', got {cfg.train.alternation!r}")
    if cfg.train.dtype not in ("float32", "float64"):
        raise ConfigError(f"train.dtype must be 'float32' or 'float64', got {cfg.train.dtype!r}")
    if cfg.loss.ssim_channel_mode not in CHANNEL_MODES:
        raise ConfigError(f"loss.ssim_channel_mode must be one of {CHANNEL_MODES}")


def _parse_value(section: str, key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw.strip("\"'")
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as {kind.__name__}") from None


def _section_types(cls) -> dict[str, type]:
    # dataclass annotations are strings under postponed evaluation
    names = {"int": int, "float": float, "bool": bool, "str": str}
    return {f.name: names[f.type] if isinstance(f.type, str) else f.type for f in fields(cls)}


def parse_config(text: str) -> TrainConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown config section [{unknown[0]}]")

    values: dict[str, dict] = {}
    classes = {"data": DataConfig, "arch": ArchConfig, "loss": LossConfig, "optim": OptimConfig, "train": RunConfig}
    for section, cls in classes.items():
        types = _section_types(cls)
        values[section] = {}
        if not parser.has_section(section):
            continue
        for key, raw in parser.items(section):
            if key not in types:
                raise ConfigError(f"unknown config key {section}.{key}")
            values[section][key] = _parse_value(section, key, raw, types[key])

    arch_values = values["arch"]
    try:
        preset = arch_values.get("preset", "default")
        base = arch_preset(preset, arch_values.get("image_size"))
        arch = replace(base, **arch_values)
        parts = {"arch": arch}
        for section in ("data", "loss", "optim", "train"):
            parts[section] = classes[section](**values[section])
        return TrainConfig(**parts)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> TrainConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: TrainConfig) -> str:
    out = io.StringIO()
    for i, section in enumerate(SECTIONS):
        if i:
            out.write("\n")
        out.write(f"[{section}]\n")
        part = getattr(cfg, section)
        for f in fields(part):
            out.write(f"{f.name} = {_format_value(getattr(part, f.name))}\n")
    return out.getvalue()


def save_config(cfg: TrainConfig, path) -> None:
    Path(path).write_text(serialize_config(cfg))


_KEY_DOCS = {
    "data.batch_size": "images per domain per step",
    "data.hflip": "random horizontal flips (seeded); off by default",
    "arch.preset": "'default' (256 px, 9 residual blocks; 6 below 256 px) or 'toy'",
    "arch.base_width": "generator width W of the first conv",
    "arch.disc_width": "discriminator width of the first conv",
    "arch.n_res_blocks": "residual blocks at the generator bottleneck",
    "arch.image_size": "training resolution; images are resized to image_size x image_size",
    "arch.norm": "'instance' or 'none'",
    "loss.lambda_adv": "weight of the adversarial term",
    "loss.lambda_cyc": "weight of the cycle-consistency term",
    "loss.lambda_ssim": "weight of the SSIM term",
    "loss.ssim_window": "odd patch size for SSIM statistics",
    "loss.ssim_c1": "SSIM luminance constant on [0, 1] images",
    "loss.ssim_c2": "SSIM contrast/structure constant on [0, 1] images",
    "loss.ssim_channel_mode": "'luminance' (BT.601) or 'per-channel-mean'",
    "loss.adversarial": "'least_squares' or 'nll'",
    "optim.lr": "ADAM learning rate",
    "optim.beta1": "ADAM first-moment decay (momentum)",
    "optim.beta2": "ADAM second-moment decay",
    "optim.eps": "ADAM epsilon",
    "train.steps": "total optimisation steps",
    "train.seed": "seed for initialisation, shuffling and replay buffers",
    "train.buffer_capacity": "replay pool size per discriminator (0 disables)",
    "train.checkpoint_every": "checkpoint cadence in steps (0 = only final)",
    "train.alternation": "'joint' (G and F together) or 'strict' (G, D_Y, F, D_X)",
    "train.deterministic": "pin BLAS to one thread for bitwise-repeatable runs",
    "train.checked": "abort on NaN/Inf in any loss or op",
    "train.dtype": "'float32' or 'float64'",
}


def reference_config() -> str:
    """Default config with one comment per key."""
    cfg = TrainConfig()
    out = io.StringIO()
    out.write("# uwcolor configuration reference (all defaults)\n")
    for section in SECTIONS:
        out.write(f"\n[{section}]\n")
        part = getattr(cfg, section)
        for f in fields(part):
            out.write(f"# {_KEY_DOCS[f'{section}.{f.name}']}\n")
            out.write(f"{f.name} = {_format_value(getattr(part, f.name))}\n")
    return out.getvalue()
