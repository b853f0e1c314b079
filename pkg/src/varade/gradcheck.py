"""Central finite-difference gradient checking for the forecaster loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import total_loss
from .model import VaradeModel, forward
from .tensor import GradTape, Tensor, conv1d, flatten, linear


def loss_value(model: VaradeModel, window: np.ndarray, target: np.ndarray, kl_weight: float) -> float:
    mu, logvar = forward(model, window)
    return float(total_loss(target, mu, logvar, kl_weight).total)


def analytic_gradient(model, window, target, kl_weight) -> list[np.ndarray]:
    with GradTape() as tape:
        mu, logvar = forward(model, window)
        loss = total_loss(target, mu, logvar, kl_weight)
    return tape.gradient(loss.total, model.parameters())


def _relu_pattern(model: VaradeModel, window: np.ndarray) -> tuple[np.ndarray, ...]:
    # activity masks of every ReLU plus the log-variance clamp
    masks = []
    t = Tensor.wrap(np.asarray(window, dtype=model.dtype))
    for w, b in model.conv:
        pre = conv1d(t, w, b)
        masks.append(pre.data > 0)
        t = Tensor.wrap(np.maximum(pre.data, 0))
    raw = linear(flatten(t), *model.head).data[..., model.config.channels :]
    lo, hi = model.config.logvar_clamp
    masks.append((raw >= lo) & (raw <= hi))
    return tuple(masks)


def _same(a, b) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


@dataclass
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    n_refined: int


def finite_difference_check(
    model: VaradeModel,
    window: np.ndarray,
    target: np.ndarray,
    kl_weight: float,
    h: float = 1e-3,
) -> GradCheckResult:
    """Compare tape gradients against central differences, in float64.

    Central differences at ``h`` and ``h/2`` are combined by Richardson
    extrapolation. When a probe flips a ReLU (or the clamp) the step is
    shrunk until every probe stays on the same linear piece, so the
    comparison is never made across a kink.
    """
    m64 = model.astype(np.float64)
    window = np.asarray(window, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    analytic = analytic_gradient(m64, window, target, kl_weight)
    base_pattern = _relu_pattern(m64, window)

    def central(flat, i, orig, step):
        # None when a probe leaves the current linear piece
        vals = []
        for sign in (1.0, -1.0):
            flat[i] = orig + sign * step
            if not _same(_relu_pattern(m64, window), base_pattern):
                flat[i] = orig
                return None
            vals.append(loss_value(m64, window, target, kl_weight))
        flat[i] = orig
        return (vals[0] - vals[1]) / (2 * step)

    worst = 0.0
    checked = refined = 0
    for p, ga in zip(m64.parameters(), analytic):
        flat = p.data.reshape(-1)
        ga = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            step = h
            while True:
                d_h = central(flat, i, orig, step)
                d_half = central(flat, i, orig, step / 2) if d_h is not None else None
                if d_half is not None or step < 1e-9:
                    break
                step /= 10.0
                refined += 1
            if d_half is None:
                raise RuntimeError(f"{p.name}[{i}] sits on a kink at every probe step")
            # Richardson: cancels the h^2 truncation term of the central difference
            numeric = (4.0 * d_half - d_h) / 3.0
            worst = max(worst, relative_error(ga[i], numeric))
            checked += 1
    return GradCheckResult(worst, checked, refined)


def relative_error(a: float, b: float, floor: float = 1e-8) -> float:
    denom = max(abs(a), abs(b), floor)
    return abs(a - b) / denom
