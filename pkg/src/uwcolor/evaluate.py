"""Applying a trained forward generator and scoring the result.

Metrics are computed on [0, 1] images:

* luminance SSIM between input and corrected output (structure kept),
* per-channel means before and after,
* gray-world deviation before and after (a colour-cast proxy, not a
  perceptual quality score),
* cycle L1, mean |F(G(x)) - x|, when the backward generator is available.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .autograd import Tensor, default_dtype, no_grad
from .checkpoint import load_generator
from .data import IMAGE_SUFFIXES, DatasetError, denormalize, load_rgb, normalize, resize_rgb
from .losses import SsimParams, ssim_map
from .nets import GeneratorNet, generator_forward

log = logging.getLogger(__name__)

REPORT_COLUMNS = (
    "name", "ssim_lum", "mean_r_in", "mean_g_in", "mean_b_in", "mean_r_out", "mean_g_out", "mean_b_out",
    "grayworld_in", "grayworld_out", "cycle_l1",
)


def gray_world_deviation(image) -> float:
    """Mean over channels of |channel mean - mean of channel means|.

    ``image`` is 3 x H x W (or N x 3 x H x W) in [0, 1].
    """
    arr = np.asarray(image.data if isinstance(image, Tensor) else image, dtype=np.float64)
    if arr.ndim == 4:
        return float(np.mean([gray_world_deviation(a) for a in arr]))
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected a 3 x H x W image, got {arr.shape}")
    means = arr.mean(axis=(1, 2))
    return float(np.abs(means - means.mean()).mean())


@dataclass
class Corrector:
    """Forward generator plus the resolution it was trained at."""

    G: GeneratorNet
    image_size: int
    dtype: str = "float32"
    F: GeneratorNet | None = None

    @classmethod
    def from_checkpoint(cls, path, with_backward: bool = False) -> "Corrector":
        G, cfg = load_generator(path, "G")
        F = load_generator(path, "F")[0] if with_backward else None
        return cls(G, cfg.arch.image_size, cfg.train.dtype, F)

    def _run(self, net: GeneratorNet, x: np.ndarray) -> np.ndarray:
        with no_grad(), default_dtype(self.dtype):
            return generator_forward(net, Tensor(x[None].astype(self.dtype))).data[0]

    def prepare(self, image) -> np.ndarray:
        """Path or H x W x 3 uint8 -> resized 3 x S x S in [-1, 1]."""
        img = load_rgb(image) if isinstance(image, (str, Path)) else np.asarray(image, dtype=np.uint8)
        if img.ndim == 2:
            img = np.repeat(img[..., None], 3, axis=2)
        return normalize(resize_rgb(img, self.image_size), self.dtype)

    def correct(self, image) -> np.ndarray:
        """Corrected H x W x 3 uint8 image at the training resolution."""
        return denormalize(self._run(self.G, self.prepare(image)))


def correct_image(checkpoint, image) -> np.ndarray:
    """``denormalize(G(normalize(image)))``; ``checkpoint`` is a path or a :class:`Corrector`."""
    corrector = checkpoint if isinstance(checkpoint, Corrector) else Corrector.from_checkpoint(checkpoint)
    return corrector.correct(image)


def _list_inputs(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise FileNotFoundError(f"input {path} does not exist")
    return sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def correct_directory(checkpoint, src, out_dir, suffix: str = "_corrected") -> list[Path]:
    """Correct one file or every image in a directory; outputs are ``<stem><suffix>.png``."""
    corrector = checkpoint if isinstance(checkpoint, Corrector) else Corrector.from_checkpoint(checkpoint)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for path in _list_inputs(Path(src)):
        try:
            out = corrector.correct(path)
        except DatasetError as exc:
            log.warning("skipping %s: %s", path, exc)
            continue
        target = out_dir / f"{path.stem}{suffix}.png"
        Image.fromarray(out).save(target)
        written.append(target)
    return written


@dataclass
class EvalRecord:
    name: str
    ssim_lum: float
    means_in: tuple[float, float, float]
    means_out: tuple[float, float, float]
    grayworld_in: float
    grayworld_out: float
    cycle_l1: float | None = None

    def row(self) -> list:
        cyc = "" if self.cycle_l1 is None else repr(self.cycle_l1)
        return [self.name, repr(self.ssim_lum), *map(repr, self.means_in), *map(repr, self.means_out),
                repr(self.grayworld_in), repr(self.grayworld_out), cyc]


@dataclass
class EvalSummary:
    count: int = 0
    ssim_lum: float = float("nan")
    grayworld_in: float = float("nan")
    grayworld_out: float = float("nan")
    cycle_l1: float | None = None
    records: list[EvalRecord] = field(default_factory=list)

    @property
    def grayworld_ratio(self) -> float:
        return self.grayworld_out / self.grayworld_in if self.count and self.grayworld_in > 0 else float("nan")


def evaluate_image(corrector: Corrector, image, name: str = "", ssim: SsimParams = SsimParams()) -> EvalRecord:
    x = corrector.prepare(image)
    y = corrector._run(corrector.G, x)
    x01 = (x.astype(np.float64) + 1) / 2
    y01 = (y.astype(np.float64) + 1) / 2
    lum = SsimParams(ssim.window, ssim.c1, ssim.c2, "luminance")
    with no_grad():
        s = float(ssim_map(Tensor(x01[None]), Tensor(y01[None]), lum).data.mean())
    cyc = None
    if corrector.F is not None:
        rec = (corrector._run(corrector.F, y).astype(np.float64) + 1) / 2
        cyc = float(np.abs(rec - x01).mean())
    return EvalRecord(
        name, s,
        tuple(float(v) for v in x01.mean(axis=(1, 2))),
        tuple(float(v) for v in y01.mean(axis=(1, 2))),
        gray_world_deviation(x01), gray_world_deviation(y01), cyc,
    )


def summarize(records: list[EvalRecord]) -> EvalSummary:
    if not records:
        return EvalSummary()
    cyc = [r.cycle_l1 for r in records if r.cycle_l1 is not None]
    return EvalSummary(
        len(records),
        float(np.mean([r.ssim_lum for r in records])),
        float(np.mean([r.grayworld_in for r in records])),
        float(np.mean([r.grayworld_out for r in records])),
        float(np.mean(cyc)) if cyc else None,
        records,
    )


def evaluate_directory(checkpoint, directory, report=None, strips_dir=None) -> EvalSummary:
    """Score every image in ``directory``.

    ``report`` receives a tab-separated table with header :data:`REPORT_COLUMNS`
    and a final ``MEAN`` row. ``strips_dir`` receives side-by-side
    input | output PNGs.
    """
    corrector = checkpoint if isinstance(checkpoint, Corrector) else Corrector.from_checkpoint(checkpoint, with_backward=True)
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"evaluation directory {directory} does not exist")
    paths = _list_inputs(directory)
    if not paths:
        log.warning("no images found in %s; empty summary", directory)
    records = []
    for path in paths:
        try:
            records.append(evaluate_image(corrector, path, path.name))
        except DatasetError as exc:
            log.warning("skipping %s: %s", path, exc)
            continue
        if strips_dir is not None:
            strips = Path(strips_dir)
            strips.mkdir(parents=True, exist_ok=True)
            raw = resize_rgb(load_rgb(path), corrector.image_size)
            Image.fromarray(np.hstack([raw, corrector.correct(path)])).save(strips / f"{path.stem}_strip.png")
    summary = summarize(records)
    if report is not None:
        write_report(summary, report)
    return summary


def write_report(summary: EvalSummary, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in summary.records:
            w.writerow(r.row())
        if summary.count:
            cyc = "" if summary.cycle_l1 is None else repr(summary.cycle_l1)
            w.writerow(["MEAN", repr(summary.ssim_lum), *[""] * 6, repr(summary.grayworld_in),
                        repr(summary.grayworld_out), cyc])
