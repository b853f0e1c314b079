"""Variational training objective.

Both terms are averaged over every element (channels, and the batch when
present) so the KL weight means the same thing at any channel count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, custom_op, weighted_sum


def _check(*ts: Tensor) -> None:
    shapes = {t.shape for t in ts}
    if len(shapes) != 1:
        raise ShapeError(f"operand shapes differ: {sorted(shapes)}")


def gaussian_nll(y, mu: Tensor, logvar: Tensor) -> Tensor:
    """mean of 0.5 * (logvar + (y - mu)^2 * exp(-logvar)); the log(2 pi) constant is dropped."""
    y = y if isinstance(y, Tensor) else Tensor.wrap(np.asarray(y, dtype=mu.dtype))
    _check(y, mu, logvar)
    dt = mu.dtype
    yd = y.data.astype(dt, copy=False)
    diff = yd - mu.data
    inv_var = np.exp(-logvar.data)
    n = diff.size
    out = np.asarray(0.5 * np.mean(logvar.data + diff * diff * inv_var), dtype=dt)

    def back(g):
        scale = g / dt.type(n)
        g_mu = -scale * diff * inv_var
        g_lv = scale * dt.type(0.5) * (1 - diff * diff * inv_var)
        return None, g_mu, g_lv

    return custom_op("gaussian_nll", out, (y, mu, logvar), back)


def kl_std_normal(mu: Tensor, logvar: Tensor) -> Tensor:
    """mean of -0.5 * (1 + logvar - mu^2 - exp(logvar)): KL to N(0, 1)."""
    _check(mu, logvar)
    dt = mu.dtype
    m, lv = mu.data, logvar.data
    var = np.exp(lv)
    n = m.size
    out = np.asarray(-0.5 * np.mean(1 + lv - m * m - var), dtype=dt)

    def back(g):
        scale = g / dt.type(n)
        return scale * m, scale * dt.type(0.5) * (var - 1)

    return custom_op("kl_std_normal", out, (mu, logvar), back)


@dataclass
class LossBreakdown:
    recon: Tensor
    kl: Tensor
    total: Tensor

    def as_floats(self) -> dict[str, float]:
        return {"recon": float(self.recon), "kl": float(self.kl), "total": float(self.total)}


def total_loss(y, mu: Tensor, logvar: Tensor, kl_weight: float) -> LossBreakdown:
    if kl_weight < 0:
        raise ValueError(f"kl_weight must be >= 0, got {kl_weight}")
    recon = gaussian_nll(y, mu, logvar)
    kl = kl_std_normal(mu, logvar)
    return LossBreakdown(recon, kl, weighted_sum(recon, kl, kl_weight))
