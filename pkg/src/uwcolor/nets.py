"""Residual generator and PatchGAN discriminator.

Both networks are plain containers of named parameters with stable ordering;
the forward passes are free functions over those containers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Iterator

import numpy as np

from .autograd import Tensor, get_default_dtype, leaky_relu, relu, tanh
from .conv import conv2d, conv_output_size, conv_transpose2d, instance_norm
from .optim import normal_tensor

NORMS = ("instance", "none")

# (kernel, stride, pad) of the default PatchGAN stack
PATCHGAN_LAYERS = ((4, 2, 1), (4, 2, 1), (4, 2, 1), (4, 1, 1), (4, 1, 1))


@dataclass
class ArchConfig:
    preset: str = "default"
    base_width: int = 64
    disc_width: int = 64
    n_res_blocks: int = 9
    image_size: int = 256
    norm: str = "instance"

    def __post_init__(self):
        for name in ("base_width", "disc_width", "image_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"arch.{name} must be positive, got {getattr(self, name)}")
        if self.n_res_blocks < 0:
            raise ValueError(f"arch.n_res_blocks must be >= 0, got {self.n_res_blocks}")
        if self.image_size % 4:
            raise ValueError(f"arch.image_size must be divisible by 4, got {self.image_size}")
        if self.norm not in NORMS:
            raise ValueError(f"arch.norm must be one of {NORMS}, got {self.norm!r}")


def arch_preset(name: str, image_size: int | None = None) -> ArchConfig:
    """Named architecture presets.

    ``default`` follows the usual 256 px instantiation (nine residual blocks,
    six below 256 px); ``toy`` is the desk-scale network used in tests.
    """
    if name == "default":
        size = 256 if image_size is None else image_size
        return ArchConfig("default", 64, 64, 9 if size >= 256 else 6, size, "instance")
    if name == "toy":
        return ArchConfig("toy", 16, 8, 1, 64 if image_size is None else image_size, "instance")
    raise ValueError(f"unknown arch preset {name!r}; expected 'default' or 'toy'")


@dataclass
class GeneratorNet:
    base_width: int
    n_res_blocks: int
    norm: str = "instance"
    params: dict[str, Tensor] = field(default_factory=dict)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.params.items())

    def __call__(self, x: Tensor) -> Tensor:
        return generator_forward(self, x)


@dataclass
class DiscriminatorNet:
    base_width: int
    norm: str = "instance"
    slope: float = 0.2
    layers: tuple = PATCHGAN_LAYERS
    params: dict[str, Tensor] = field(default_factory=dict)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.params.items())

    def __call__(self, x: Tensor) -> Tensor:
        return discriminator_forward(self, x)


def _ones(n: int) -> Tensor:
    return Tensor(np.ones(n, dtype=get_default_dtype()), requires_grad=True)


def _zeros(n: int) -> Tensor:
    return Tensor(np.zeros(n, dtype=get_default_dtype()), requires_grad=True)


def _conv_block(params, name, shape, rng, norm, out_channels):
    params[f"{name}.weight"] = normal_tensor(shape, rng)
    if norm == "instance":
        params[f"{name}.gamma"] = _ones(out_channels)
        params[f"{name}.beta"] = _zeros(out_channels)
    else:
        params[f"{name}.bias"] = _zeros(out_channels)


def build_generator(config: ArchConfig, rng: np.random.Generator) -> GeneratorNet:
    """c7s1-W, d2W, d4W, n x R4W, u2W, uW, c7s1-3 with tanh output."""
    w = config.base_width
    net = GeneratorNet(w, config.n_res_blocks, config.norm)
    p, norm = net.params, config.norm
    _conv_block(p, "stem", (w, 3, 7, 7), rng, norm, w)
    _conv_block(p, "down1", (2 * w, w, 3, 3), rng, norm, 2 * w)
    _conv_block(p, "down2", (4 * w, 2 * w, 3, 3), rng, norm, 4 * w)
    for i in range(config.n_res_blocks):
        _conv_block(p, f"res{i}.conv1", (4 * w, 4 * w, 3, 3), rng, norm, 4 * w)
        _conv_block(p, f"res{i}.conv2", (4 * w, 4 * w, 3, 3), rng, norm, 4 * w)
    # transposed kernels are (C_in, C_out, K, K)
    _conv_block(p, "up1", (4 * w, 2 * w, 3, 3), rng, norm, 2 * w)
    _conv_block(p, "up2", (2 * w, w, 3, 3), rng, norm, w)
    p["head.weight"] = normal_tensor((3, w, 7, 7), rng)
    p["head.bias"] = _zeros(3)
    return net


def _normalize(net, name: str, h: Tensor) -> Tensor:
    p = net.params
    if net.norm == "instance":
        return instance_norm(h, p[f"{name}.gamma"], p[f"{name}.beta"])
    return h + p[f"{name}.bias"].reshape((1, -1, 1, 1))


def generator_forward(net: GeneratorNet, x: Tensor) -> Tensor:
    if x.ndim != 4 or x.shape[1] != 3:
        raise ValueError(f"generator expects N x 3 x H x W input, got {x.shape}")
    h, w = x.shape[2:]
    if h % 4 or w % 4:
        raise ValueError(f"generator input height and width must be divisible by 4, got {h}x{w}")
    p = net.params
    out = relu(_normalize(net, "stem", conv2d(x, p["stem.weight"], padding_mode="reflect", pad=3)))
    out = relu(_normalize(net, "down1", conv2d(out, p["down1.weight"], stride=2, pad=1)))
    out = relu(_normalize(net, "down2", conv2d(out, p["down2.weight"], stride=2, pad=1)))
    for i in range(net.n_res_blocks):
        r = relu(_normalize(net, f"res{i}.conv1", conv2d(out, p[f"res{i}.conv1.weight"], padding_mode="reflect", pad=1)))
        r = _normalize(net, f"res{i}.conv2", conv2d(r, p[f"res{i}.conv2.weight"], padding_mode="reflect", pad=1))
        out = out + r
    out = relu(_normalize(net, "up1", conv_transpose2d(out, p["up1.weight"], stride=2, pad=1, output_padding=1)))
    out = relu(_normalize(net, "up2", conv_transpose2d(out, p["up2.weight"], stride=2, pad=1, output_padding=1)))
    out = conv2d(out, p["head.weight"], p["head.bias"], padding_mode="reflect", pad=3)
    return tanh(out)


def build_discriminator(config: ArchConfig, rng: np.random.Generator) -> DiscriminatorNet:
    d = config.disc_width
    net = DiscriminatorNet(d, config.norm)
    p = net.params
    p["layer0.weight"] = normal_tensor((d, 3, 4, 4), rng)
    p["layer0.bias"] = _zeros(d)
    widths = [d, 2 * d, 4 * d, 8 * d]
    for i in range(1, 4):
        _conv_block(p, f"layer{i}", (widths[i], widths[i - 1], 4, 4), rng, config.norm, widths[i])
    p["head.weight"] = normal_tensor((1, 8 * d, 4, 4), rng)
    p["head.bias"] = _zeros(1)
    return net


def discriminator_min_size(layers=PATCHGAN_LAYERS) -> int:
    """Smallest square input for which every layer has a non-empty output."""
    need = 1
    for k, s, pad in reversed(layers):
        # smallest n with (n + 2 pad - k) // s + 1 >= need
        need = max(1, (need - 1) * s + k - 2 * pad)
    return need


def discriminator_output_size(n: int, layers=PATCHGAN_LAYERS) -> int:
    for k, s, pad in layers:
        n = conv_output_size(n, k, s, pad)
    return n


def discriminator_forward(net: DiscriminatorNet, img: Tensor) -> Tensor:
    """Raw (unsquashed) N x 1 x h x w logit map."""
    if img.ndim != 4 or img.shape[1] != 3:
        raise ValueError(f"discriminator expects N x 3 x H x W input, got {img.shape}")
    smallest = discriminator_min_size(net.layers)
    if min(img.shape[2:]) < smallest:
        raise ValueError(f"discriminator input {img.shape[2]}x{img.shape[3]} too small; minimum is {smallest}x{smallest}")
    p = net.params
    (k0, s0, p0), *middle, (kh, sh, ph) = net.layers
    out = leaky_relu(conv2d(img, p["layer0.weight"], p["layer0.bias"], stride=s0, pad=p0), net.slope)
    for i, (_, s, pad) in enumerate(middle, start=1):
        out = leaky_relu(_normalize(net, f"layer{i}", conv2d(out, p[f"layer{i}.weight"], stride=s, pad=pad)), net.slope)
    return conv2d(out, p["head.weight"], p["head.bias"], stride=sh, pad=ph)


def receptive_field(layer_spec) -> int:
    """Receptive field of one output unit of a conv stack.

    ``layer_spec`` is a sequence of ``(kernel, stride)`` or
    ``(kernel, stride, pad)`` tuples.
    """
    rf, jump = 1, 1
    for layer in layer_spec:
        k, s = layer[0], layer[1]
        rf += (k - 1) * jump
        jump *= s
    return rf


def parameter_count(net) -> int:
    return sum(t.size for t in net.params.values())


# -- near-identity construction --------------------------------------------

def _atanh_knots(n_knots: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Piecewise-linear fit f(u) ~ atanh(u - 1) on u in [0, 2] as
    ``sum_k w_k relu(u - t_k) + b``."""
    t = np.linspace(0.0, 2.0, n_knots + 1)[:-1]
    if n_knots > 2:
        # cluster knots toward the ends where atanh bends
        t = 1.0 - np.cos(np.linspace(0.0, np.pi, n_knots + 1)[:-1])
    u = np.linspace(0.0, 2.0, 4001)
    target = np.arctanh(np.clip(u - 1.0, -0.995, 0.995))
    basis = np.maximum(u[:, None] - t[None, :], 0.0)
    design = np.hstack([basis, np.ones((u.size, 1))])
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    return t, coef[:-1], float(coef[-1])


def make_identity_generator(base_width: int = 16, n_res_blocks: int = 1, noise: float = 0.0,
                            rng: np.random.Generator | None = None) -> GeneratorNet:
    """Generator (without normalisation) wired to approximate the identity.

    The two stride-2 stages pack the 2x2 sub-pixel phases into channels and the
    transposed stages unpack them, so resolution is never lost; residual blocks
    contribute zero; the last stage feeds a piecewise-linear inverse of tanh.
    Needs ``base_width >= 12``. ``noise`` adds N(0, noise) to every weight.
    """
    w = base_width
    if w < 12:
        raise ValueError(f"identity construction needs base_width >= 12, got {w}")
    cfg = ArchConfig("identity", w, 8, n_res_blocks, 64, "none")
    net = build_generator(cfg, np.random.default_rng(0))
    dtype = get_default_dtype()
    for t in net.params.values():
        t.data[...] = 0
    p = net.params
    phases = [(a, b) for a in (0, 1) for b in (0, 1)]
    for c in range(3):
        p["stem.weight"].data[c, c, 3, 3] = 1
        p["stem.bias"].data[c] = 1  # shift into [0, 2] so relus pass everything
    for c in range(3):
        for q, (a, b) in enumerate(phases):
            p["down1.weight"].data[4 * c + q, c, 1 + a, 1 + b] = 1
    for c in range(12):
        for q, (a, b) in enumerate(phases):
            p["down2.weight"].data[4 * c + q, c, 1 + a, 1 + b] = 1
            p["up1.weight"].data[4 * c + q, c, 1 + a, 1 + b] = 1
    n_knots = min(5, w // 3)
    knots, slopes, offset = _atanh_knots(n_knots)
    for c in range(3):
        for q, (a, b) in enumerate(phases):
            for j in range(n_knots):
                p["up2.weight"].data[4 * c + q, n_knots * c + j, 1 + a, 1 + b] = 1
        for j in range(n_knots):
            p["up2.bias"].data[n_knots * c + j] = -knots[j]
            p["head.weight"].data[c, n_knots * c + j, 3, 3] = slopes[j]
        p["head.bias"].data[c] = offset
    if noise > 0:
        rng = np.random.default_rng(0) if rng is None else rng
        for t in net.params.values():
            t.data += rng.normal(0.0, noise, size=t.shape).astype(dtype)
    return net


def arch_dict(config: ArchConfig) -> dict:
    return asdict(config)
