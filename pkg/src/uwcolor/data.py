"""Unpaired two-domain image datasets and synthetic toy domains."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .autograd import Tensor, get_default_dtype

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class DatasetError(ValueError):
    pass


def normalize(img_u8: np.ndarray, dtype=None) -> np.ndarray:
    """H x W x 3 uint8 -> 3 x H x W floats in [-1, 1]."""
    dtype = get_default_dtype() if dtype is None else dtype
    arr = np.asarray(img_u8, dtype=np.float64) / 255.0 * 2.0 - 1.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1)).astype(dtype)


def denormalize(arr: np.ndarray) -> np.ndarray:
    """3 x H x W floats in [-1, 1] -> H x W x 3 uint8."""
    arr = np.asarray(arr, dtype=np.float64)
    u8 = np.clip(np.rint((arr + 1.0) / 2.0 * 255.0), 0, 255).astype(np.uint8)
    return np.ascontiguousarray(u8.transpose(1, 2, 0))


def load_rgb(path) -> np.ndarray:
    """Decode PNG/JPEG to H x W x 3 uint8; grayscale is replicated to RGB.

    Raises ``DatasetError`` when the file cannot be decoded.
    """
    try:
        with Image.open(path) as im:
            im.load()
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DatasetError(f"cannot decode {path}: {exc}") from exc


def resize_rgb(img_u8: np.ndarray, size: int) -> np.ndarray:
    if img_u8.shape[:2] == (size, size):
        return img_u8
    return np.asarray(Image.fromarray(img_u8).resize((size, size), Image.BILINEAR), dtype=np.uint8)


def decode_resize_normalize(path, size: int, dtype=None) -> np.ndarray:
    """Full-frame bilinear resize to ``size`` x ``size`` (aspect not kept), then map to [-1, 1]."""
    return normalize(resize_rgb(load_rgb(path), size), dtype)


def _list_images(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def _decodable(paths: list[Path]) -> tuple[list[Path], list[Path]]:
    good, bad = [], []
    for path in paths:
        try:
            with Image.open(path) as im:
                im.load()
            good.append(path)
        except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
            log.warning("skipping undecodable image %s (%s)", path, exc)
            bad.append(path)
    return good, bad


@dataclass
class UnpairedDataset:
    domain_x_paths: list[Path]
    domain_y_paths: list[Path]
    image_size: int = 256
    seed: int = 0
    batch_size: int = 1
    skipped: list[Path] = field(default_factory=list)

    def __post_init__(self):
        if not self.domain_x_paths or not self.domain_y_paths:
            raise DatasetError("both domains must contain at least one image")
        if self.batch_size < 1:
            raise DatasetError(f"batch size must be >= 1, got {self.batch_size}")

    @property
    def sizes(self) -> tuple[int, int]:
        return len(self.domain_x_paths), len(self.domain_y_paths)

    @property
    def steps_per_epoch(self) -> int:
        # the larger domain sets the epoch; the smaller one wraps around
        return -(-max(self.sizes) // self.batch_size)


def scan_domains(dir_x, dir_y, image_size: int = 256, seed: int = 0, batch_size: int = 1) -> UnpairedDataset:
    """Collect decodable images from two directories in lexicographic order."""
    paths, skipped = {}, []
    for label, directory in (("X", dir_x), ("Y", dir_y)):
        directory = Path(directory)
        if not directory.is_dir():
            raise DatasetError(f"domain {label} directory {directory} does not exist")
        good, bad = _decodable(_list_images(directory))
        skipped.extend(bad)
        if not good:
            raise DatasetError(f"domain {label} directory {directory} has no decodable images")
        paths[label] = good
    if skipped:
        log.info("skipped %d undecodable file(s)", len(skipped))
    return UnpairedDataset(paths["X"], paths["Y"], image_size, seed, batch_size, skipped)


def domain_permutation(seed: int, epoch: int, domain: int, n: int) -> np.ndarray:
    """Shuffle order for one domain in one epoch; a pure function of its arguments."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, epoch, domain])))
    return rng.permutation(n)


def batch_indices(dataset: UnpairedDataset, epoch: int, step: int) -> tuple[list[int], list[int]]:
    nx, ny = dataset.sizes
    perm_x = domain_permutation(dataset.seed, epoch, 0, nx)
    perm_y = domain_permutation(dataset.seed, epoch, 1, ny)
    positions = range(step * dataset.batch_size, (step + 1) * dataset.batch_size)
    return [int(perm_x[p % nx]) for p in positions], [int(perm_y[p % ny]) for p in positions]


@dataclass
class ImageBatch:
    x: Tensor
    y: Tensor
    x_ids: list[str]
    y_ids: list[str]


def next_batch(dataset: UnpairedDataset, epoch: int, step: int, dtype=None) -> ImageBatch:
    """Batch ``step`` of ``epoch``; X and Y are drawn through independent shuffles."""
    ix, iy = batch_indices(dataset, epoch, step)
    xs = [decode_resize_normalize(dataset.domain_x_paths[i], dataset.image_size, dtype) for i in ix]
    ys = [decode_resize_normalize(dataset.domain_y_paths[i], dataset.image_size, dtype) for i in iy]
    return ImageBatch(
        Tensor(np.stack(xs)),
        Tensor(np.stack(ys)),
        [dataset.domain_x_paths[i].name for i in ix],
        [dataset.domain_y_paths[i].name for i in iy],
    )


# -- synthetic domains -----------------------------------------------------

def smooth_pattern(rng: np.random.Generator, size: int, n_waves: int = 3) -> np.ndarray:
    """Random smooth colour field, 3 x size x size in [0, 1].

    A sum of low-frequency plane waves shared by all channels carries the
    structure; each channel adds its own weaker waves and a mean offset.
    """
    yy, xx = np.mgrid[0:size, 0:size] / size

    def waves(n, amp_lo, amp_hi):
        field_ = np.zeros((size, size))
        for _ in range(n):
            freq = rng.uniform(0.5, 3.0)
            theta = rng.uniform(0, 2 * np.pi)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(amp_lo, amp_hi)
            field_ += amp * np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        return field_

    shared = waves(n_waves, 0.08, 0.18)
    channels = [0.5 + rng.uniform(-0.05, 0.05) + shared + waves(2, 0.02, 0.06) for _ in range(3)]
    return np.clip(np.stack(channels), 0.0, 1.0)


def _to_png_u8(pattern: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(pattern * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)


def make_toy_domains(out_dir, n_per_domain: int, size: int = 64, cast_gains=(0.3, 0.9, 1.0),
                     seed: int = 0) -> dict:
    """Write ``out_dir/X`` (colour-cast) and ``out_dir/Y`` (clean) PNG folders.

    Both domains come from :func:`smooth_pattern` with independent draws; X
    then gets ``cast_gains`` applied per channel and is clipped to [0, 1].
    Returns measured per-channel means of each domain.
    """
    gains = np.asarray(cast_gains, dtype=np.float64).reshape(3, 1, 1)
    if np.any(gains < 0):
        raise ValueError(f"cast gains must be non-negative, got {cast_gains}")
    out = Path(out_dir)
    seq = np.random.SeedSequence(seed)
    rng_x, rng_y = (np.random.Generator(np.random.PCG64(s)) for s in seq.spawn(2))
    means = {"X": np.zeros(3), "Y": np.zeros(3)}
    for label, rng, g in (("X", rng_x, gains), ("Y", rng_y, np.ones((3, 1, 1)))):
        folder = out / label
        folder.mkdir(parents=True, exist_ok=True)
        for i in range(n_per_domain):
            u8 = _to_png_u8(np.clip(smooth_pattern(rng, size) * g, 0.0, 1.0))
            means[label] += u8.reshape(-1, 3).mean(axis=0) / 255.0
            Image.fromarray(u8).save(folder / f"toy_{i:04d}.png", optimize=False)
    n = max(n_per_domain, 1)
    return {"X": (means["X"] / n).tolist(), "Y": (means["Y"] / n).tolist(), "dir_x": str(out / "X"), "dir_y": str(out / "Y")}
