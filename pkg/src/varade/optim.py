from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class NonFiniteGradientError(FloatingPointError):
    """Raised instead of applying an update that would poison the weights."""


@dataclass
class AdamState:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place.

    The whole step is rejected if any gradient holds a NaN or inf.
    """
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} params but {len(grads)} gradients")
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ValueError(f"gradient {i} has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            name = p.name or f"#{i}"
            raise NonFiniteGradientError(
                f"step {state.step + 1}: parameter {name} has {bad} non-finite gradient entries"
            )
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        update = state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
        p.data -= update.astype(p.dtype, copy=False)
    return state
