from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .losses import total_loss
from .model import VaradeModel, forward
from .optim import AdamState, NonFiniteGradientError, adam_step
from .tensor import GradTape

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 64
    lr: float = 1e-5
    seed: int = 0
    log_every: int = 100


@dataclass
class TrainHistory:
    steps: list[int] = field(default_factory=list)
    recon: list[float] = field(default_factory=list)
    kl: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)

    def append(self, step: int, parts: dict[str, float]) -> None:
        self.steps.append(step)
        self.recon.append(parts["recon"])
        self.kl.append(parts["kl"])
        self.total.append(parts["total"])


def sample_batch(series: np.ndarray, window: int, batch: int, rng: np.random.Generator):
    """Uniformly drawn ``[B, C, T]`` windows and their next-sample targets ``[B, C]``."""
    n = len(series)
    if n < window + 1:
        raise ValueError(f"need more than {window} samples to train, got {n}")
    starts = rng.integers(0, n - window, size=batch)
    idx = starts[:, None] + np.arange(window)[None, :]
    x = series[idx].transpose(0, 2, 1)
    y = series[starts + window]
    return np.ascontiguousarray(x), np.ascontiguousarray(y)


def train_step(model: VaradeModel, x: np.ndarray, y: np.ndarray, state: AdamState) -> dict[str, float]:
    params = model.parameters()
    with GradTape() as tape:
        mu, logvar = forward(model, x)
        loss = total_loss(y, mu, logvar, model.config.kl_weight)
    parts = loss.as_floats()
    if not np.isfinite(parts["total"]):
        raise NonFiniteGradientError(f"step {state.step + 1}: non-finite loss {parts}")
    grads = tape.gradient(loss.total, params)
    adam_step(params, grads, state)
    return parts


def train(
    model: VaradeModel,
    series: np.ndarray,
    cfg: TrainConfig,
    state: AdamState | None = None,
) -> TrainHistory:
    """Fit ``model`` in place on a normalized ``[N, C]`` series of normal behaviour."""
    series = np.ascontiguousarray(series, dtype=model.dtype)
    if series.ndim != 2 or series.shape[1] != model.config.channels:
        raise ValueError(f"series must be [N, {model.config.channels}], got {series.shape}")
    rng = np.random.default_rng(cfg.seed)
    state = state if state is not None else AdamState(lr=cfg.lr)
    history = TrainHistory()
    for step in range(1, cfg.steps + 1):
        x, y = sample_batch(series, model.config.window, cfg.batch_size, rng)
        parts = train_step(model, x, y, state)
        if step == 1 or step % cfg.log_every == 0 or step == cfg.steps:
            history.append(step, parts)
            logger.info("step %d recon %.5f kl %.5f total %.5f", step, parts["recon"], parts["kl"], parts["total"])
    return history


def evaluate_loss(model: VaradeModel, series: np.ndarray, n_windows: int = 512, seed: int = 1) -> dict[str, float]:
    """Loss on a fixed random draw of windows (no update)."""
    rng = np.random.default_rng(seed)
    x, y = sample_batch(np.ascontiguousarray(series, dtype=model.dtype), model.config.window, n_windows, rng)
    mu, logvar = forward(model, x)
    return total_loss(y, mu, logvar, model.config.kl_weight).as_floats()
