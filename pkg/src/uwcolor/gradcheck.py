"""Central finite-difference gradient checking.

Probes whose +h or -h evaluation flips a branch of a piecewise op (relu,
leaky relu, abs, clip) relative to the unperturbed evaluation straddle a kink;
the difference quotient there does not estimate the derivative at the point,
so such probes are skipped and counted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autograd import Tensor, no_grad, record_branches


def _same_branches(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def numeric_grad(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-4, indices=None,
                 skip_kinks: bool = True) -> np.ndarray:
    """d fn() / d t by central differences.

    ``indices`` limits the probed flat entries; unprobed entries and (with
    ``skip_kinks``) probes that cross a kink are NaN.
    """
    flat = t.data.reshape(-1)
    if not np.shares_memory(flat, t.data):
        raise ValueError("tensor data must be contiguous for finite differences")
    out = np.full(flat.shape, np.nan)
    probe = range(flat.size) if indices is None else indices
    with no_grad():
        with record_branches() as base:
            fn()
        for i in probe:
            orig = flat[i]
            flat[i] = orig + h
            with record_branches() as up_branches:
                up = float(fn().item())
            flat[i] = orig - h
            with record_branches() as down_branches:
                down = float(fn().item())
            flat[i] = orig
            if skip_kinks and not (_same_branches(base, up_branches) and _same_branches(base, down_branches)):
                continue
            out[i] = (up - down) / (2 * h)
    return out.reshape(t.shape)


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| over probed (non-NaN) entries, relative to the tensor's
    gradient scale max(|a|, |n|).

    Normalising by the scale rather than per entry keeps near-zero entries,
    where the O(h^2) truncation error of the stencil dominates, from swamping
    the measure.
    """
    mask = ~np.isnan(numeric)
    a, n = analytic[mask], numeric[mask]
    if a.size == 0:
        return 0.0
    scale = max(float(np.abs(a).max()), float(np.abs(n).max()))
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - n).max() / scale)


@dataclass
class GradCheckResult:
    max_rel_error: float
    probed: int
    skipped: int

    def __float__(self) -> float:
        return self.max_rel_error


def gradient_check(fn: Callable[[], Tensor], tensors: Sequence[Tensor], h: float = 1e-4,
                   max_entries: int | None = None, rng: np.random.Generator | None = None,
                   skip_kinks: bool = True) -> GradCheckResult:
    """Compare autodiff gradients of scalar ``fn()`` with central differences.

    With ``max_entries`` set, a random subset of that many entries per tensor
    is probed.
    """
    for t in tensors:
        t.grad = None
    fn().backward()
    worst, probed, skipped = 0.0, 0, 0
    rng = np.random.default_rng(0) if rng is None else rng
    for t in tensors:
        analytic = np.zeros(t.shape) if t.grad is None else t.grad.astype(np.float64)
        idx = None
        if max_entries is not None and t.size > max_entries:
            idx = rng.choice(t.size, size=max_entries, replace=False)
        numeric = numeric_grad(fn, t, h, idx, skip_kinks)
        n_probed = t.size if idx is None else len(idx)
        n_valid = int((~np.isnan(numeric)).sum())
        probed += n_valid
        skipped += n_probed - n_valid
        worst = max(worst, max_relative_error(analytic, numeric))
    return GradCheckResult(worst, probed, skipped)


def check_gradients(fn, tensors, h: float = 1e-4, max_entries=None, rng=None, skip_kinks: bool = True) -> float:
    """Largest relative error from :func:`gradient_check`."""
    return gradient_check(fn, tensors, h, max_entries, rng, skip_kinks).max_rel_error
