"""The forecaster network: a stride-2 conv stack and a mean/log-variance head."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, Tensor, clamp, conv1d, flatten, linear, relu, split_last


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class VaradeConfig:
    window: int = 512
    channels: int = 86
    base_maps: int = 128
    kl_weight: float = 1.0
    logvar_clamp: tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        t = self.window
        if t < 4 or t & (t - 1):
            raise ConfigError(f"window must be a power of two >= 4, got {t}")
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")
        if self.base_maps < 1:
            raise ConfigError(f"base_maps must be >= 1, got {self.base_maps}")
        if self.kl_weight < 0:
            raise ConfigError(f"kl_weight must be >= 0, got {self.kl_weight}")
        lo, hi = self.logvar_clamp
        if not lo < hi:
            raise ConfigError(f"logvar_clamp must be increasing, got {self.logvar_clamp}")
        object.__setattr__(self, "logvar_clamp", (float(lo), float(hi)))

    @property
    def n_layers(self) -> int:
        # stop at temporal length 2; the head reads the last two positions
        return int(math.log2(self.window)) - 1

    @property
    def feature_maps(self) -> list[int]:
        return [self.base_maps * 2 ** ((i - 1) // 2) for i in range(1, self.n_layers + 1)]

    @property
    def head_inputs(self) -> int:
        return 2 * self.feature_maps[-1]


@dataclass
class VaradeModel:
    config: VaradeConfig
    conv: list[tuple[Tensor, Tensor]]
    head: tuple[Tensor, Tensor]
    meta: dict = field(default_factory=dict)

    def parameters(self) -> list[Tensor]:
        """All parameter tensors in build order (conv w, b per layer, then head w, b)."""
        params = []
        for w, b in self.conv:
            params += [w, b]
        params += list(self.head)
        return params

    @property
    def dtype(self):
        return self.head[0].dtype

    def astype(self, dtype) -> "VaradeModel":
        """Copy with every parameter cast to ``dtype``."""
        cast = lambda t: Tensor(t.data, dtype=dtype, name=t.name)  # noqa: E731
        return VaradeModel(
            self.config,
            [(cast(w), cast(b)) for w, b in self.conv],
            (cast(self.head[0]), cast(self.head[1])),
            dict(self.meta),
        )

    def copy(self) -> "VaradeModel":
        return self.astype(self.dtype)


def build(config: VaradeConfig, seed: int = 0, dtype=np.float32) -> VaradeModel:
    """Initialize weights uniformly in +-sqrt(1/fan_in), biases at zero."""
    rng = np.random.default_rng(seed)
    conv = []
    c_in = config.channels
    for i, c_out in enumerate(config.feature_maps):
        bound = math.sqrt(1.0 / (c_in * 2))
        w = rng.uniform(-bound, bound, size=(c_out, c_in, 2))
        conv.append((Tensor(w, dtype=dtype, name=f"conv{i}.w"), Tensor(np.zeros(c_out), dtype=dtype, name=f"conv{i}.b")))
        c_in = c_out
    fan_in = config.head_inputs
    bound = math.sqrt(1.0 / fan_in)
    hw = rng.uniform(-bound, bound, size=(2 * config.channels, fan_in))
    head = (Tensor(hw, dtype=dtype, name="head.w"), Tensor(np.zeros(2 * config.channels), dtype=dtype, name="head.b"))
    return VaradeModel(config, conv, head)


def forward(model: VaradeModel, window) -> tuple[Tensor, Tensor]:
    """Predict next-step mean and clamped log-variance.

    ``window`` is ``[C, T]`` (oldest sample first) or a batch ``[B, C, T]``.
    """
    cfg = model.config
    x = window if isinstance(window, Tensor) else Tensor.wrap(np.asarray(window, dtype=model.dtype))
    if x.shape[-2:] != (cfg.channels, cfg.window) or x.data.ndim not in (2, 3):
        raise ShapeError(f"expected window [..., {cfg.channels}, {cfg.window}], got {x.shape}")
    h = x
    for w, b in model.conv:
        h = relu(conv1d(h, w, b))
    out = linear(flatten(h), *model.head)
    mu, raw_logvar = split_last(out, cfg.channels)
    lo, hi = cfg.logvar_clamp
    return mu, clamp(raw_logvar, lo, hi)


def parameter_count(model: VaradeModel) -> int:
    return sum(p.size for p in model.parameters())
