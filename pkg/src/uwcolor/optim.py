"""ADAM with bias correction, seeded generators and weight initialisation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autograd import Tensor, get_default_dtype


@dataclass
class AdamState:
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **hyper) -> "AdamState":
        state = cls(**hyper)
        state.first_moment = [np.zeros_like(p.data) for p in params]
        state.second_moment = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params: Sequence[Tensor], state: AdamState, grads: Sequence[np.ndarray] | None = None) -> AdamState:
    """Apply one ADAM update in place. ``grads`` defaults to each ``param.grad``;
    a parameter without a gradient is treated as having a zero gradient."""
    if len(state.first_moment) != len(params):
        raise ValueError(f"optimizer tracks {len(state.first_moment)} moments for {len(params)} parameters")
    if grads is None:
        grads = [p.grad for p in params]
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if m.shape != p.shape or v.shape != p.shape:
            raise ValueError(f"moment shape {m.shape} does not match parameter {p.shape}")
        if g is None:
            g = np.zeros_like(p.data)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / correction1
        v_hat = v / correction2
        p.data -= (state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(p.dtype, copy=False)
    return state


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


def seeded_rng(seed) -> np.random.Generator:
    """PCG64 generator; the same seed gives the same stream on every platform."""
    return np.random.Generator(np.random.PCG64(seed))


def normal_init(tensor: Tensor, rng: np.random.Generator, mean: float = 0.0, std: float = 0.02) -> Tensor:
    # draw in float64 then cast so 32- and 64-bit runs see the same samples
    tensor.data[...] = rng.normal(mean, std, size=tensor.shape).astype(tensor.dtype)
    return tensor


def normal_tensor(shape, rng: np.random.Generator, mean: float = 0.0, std: float = 0.02,
                  dtype=None, requires_grad: bool = True) -> Tensor:
    dtype = get_default_dtype() if dtype is None else dtype
    t = Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad, dtype=dtype)
    return normal_init(t, rng, mean, std)
