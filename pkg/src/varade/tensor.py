"""Dense tensors and a tape-based reverse-mode engine.

Only the handful of fixed-rank operations the forecaster graph needs are
provided. An operation records itself on the innermost active
:class:`GradTape` of the calling thread; outside a tape it is a plain
forward computation.

    with GradTape() as tape:
        out = relu(conv1d(x, w, b))
        loss = total_loss(...)
    grads = tape.gradient(loss.total, params)

Every op accepts an optional leading batch axis. Model parameters are
float32; float64 tensors are accepted throughout so that gradient checks can
run at double precision.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """An operand has the wrong rank or extents for an operation."""


class Tensor:
    """A dense row-major real array.

    Thin wrapper around a contiguous numpy array; identity (not value) is
    what the tape uses to route gradients.
    """

    __slots__ = ("data", "name")

    def __init__(self, data, dtype=None, name: str | None = None):
        arr = np.array(data, dtype=dtype if dtype is not None else np.float32, copy=True)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = np.ascontiguousarray(arr)
        self.name = name

    @classmethod
    def wrap(cls, arr: np.ndarray, name: str | None = None) -> "Tensor":
        """Adopt ``arr`` without copying."""
        t = cls.__new__(cls)
        t.data = np.ascontiguousarray(arr)
        t.name = name
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def __float__(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"only size-1 tensors convert to float, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------

_local = threading.local()


def _tape_stack() -> list["GradTape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def _active_tape() -> "GradTape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class _Record:
    __slots__ = ("output", "inputs", "backward", "op")

    def __init__(self, output: Tensor, inputs: tuple[Tensor, ...], backward: BackwardFn, op: str):
        self.output = output
        self.inputs = inputs
        self.backward = backward
        self.op = op


class GradTape:
    """Ordered log of executed ops, replayed in reverse by :meth:`gradient`.

    A tape belongs to one thread and one training step.
    """

    def __init__(self):
        self.records: list[_Record] = []
        self._used = False

    def __enter__(self) -> "GradTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("GradTape exited out of order")
        stack.pop()

    def record(self, op: str, output: Tensor, inputs: Iterable[Tensor], backward: BackwardFn) -> None:
        self.records.append(_Record(output, tuple(inputs), backward, op))

    @property
    def ops(self) -> list[str]:
        return [r.op for r in self.records]

    def gradient(self, loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
        """Return d(loss)/d(p) for each ``p`` in ``params``.

        Parameters that do not reach ``loss`` get zeros of their own shape.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if self._used:
            raise RuntimeError("a GradTape can be replayed only once")
        self._used = True

        adj: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for rec in reversed(self.records):
            g_out = adj.pop(id(rec.output), None)
            if g_out is None:
                continue
            for inp, g in zip(rec.inputs, rec.backward(g_out)):
                if g is None:
                    continue
                key = id(inp)
                if key in adj:
                    adj[key] = adj[key] + g
                else:
                    adj[key] = g
        out = []
        for p in params:
            g = adj.get(id(p))
            out.append(np.zeros_like(p.data) if g is None else g.astype(p.dtype, copy=False).reshape(p.shape))
        return out


def backward(loss: Tensor, tape: GradTape, params: Sequence[Tensor]) -> list[np.ndarray]:
    return tape.gradient(loss, params)


def _emit(op: str, out: np.ndarray, inputs: tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    result = Tensor.wrap(out)
    tape = _active_tape()
    if tape is not None:
        tape.record(op, result, inputs, backward)
    return result


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------


def conv1d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Kernel-2, stride-2 convolution.

    ``x`` is ``[C_in, L]`` or ``[B, C_in, L]``; ``weight`` is ``[C_out, C_in, 2]``.
    ``out[o, t] = bias[o] + sum_{c,k} weight[o, c, k] * x[c, 2t + k]``.
    """
    xd, wd, bd = x.data, weight.data, bias.data
    if xd.ndim not in (2, 3):
        raise ShapeError(f"conv1d input must be [C, L] or [B, C, L], got {xd.shape}")
    if wd.ndim != 3 or wd.shape[2] != 2:
        raise ShapeError(f"conv1d weight must be [C_out, C_in, 2], got {wd.shape}")
    c_out, c_in, _ = wd.shape
    if bd.shape != (c_out,):
        raise ShapeError(f"conv1d bias must be [{c_out}], got {bd.shape}")
    batched = xd.ndim == 3
    xb = xd if batched else xd[None]
    n, c, length = xb.shape
    if c != c_in:
        raise ShapeError(f"conv1d expects {c_in} input channels, got {c}")
    if length < 2 or length % 2:
        raise ShapeError(f"conv1d needs an even length >= 2, got {length}")
    half = length // 2

    # [B, C, L] -> [B, L/2, C*2] so the op becomes one matmul
    cols = xb.reshape(n, c, half, 2).transpose(0, 2, 1, 3).reshape(n, half, c * 2)
    wmat = wd.reshape(c_out, c * 2)
    out = (cols @ wmat.T + bd).transpose(0, 2, 1)  # [B, C_out, L/2]
    out = np.ascontiguousarray(out)
    if not batched:
        out = out[0]

    def back(g):
        gb = g if batched else g[None]
        gt = gb.transpose(0, 2, 1)  # [B, L/2, C_out]
        gw = np.tensordot(gt, cols, axes=([0, 1], [0, 1])).reshape(wd.shape)
        gbias = gb.sum(axis=(0, 2))
        gcols = gt @ wmat  # [B, L/2, C*2]
        gx = gcols.reshape(n, half, c, 2).transpose(0, 2, 1, 3).reshape(n, c, length)
        if not batched:
            gx = gx[0]
        return gx, gw, gbias

    return _emit("conv1d", out, (x, weight, bias), back)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(x, 0); the derivative at 0 is taken as 0."""
    xd = x.data
    mask = xd > 0
    out = np.where(mask, xd, np.zeros((), dtype=xd.dtype))

    def back(g):
        return (g * mask,)

    return _emit("relu", out, (x,), back)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``out[o] = bias[o] + sum_f weight[o, f] * x[f]``; ``x`` is ``[F]`` or ``[B, F]``."""
    xd, wd, bd = x.data, weight.data, bias.data
    if wd.ndim != 2:
        raise ShapeError(f"linear weight must be [O, F], got {wd.shape}")
    o, f = wd.shape
    if bd.shape != (o,):
        raise ShapeError(f"linear bias must be [{o}], got {bd.shape}")
    if xd.ndim not in (1, 2) or xd.shape[-1] != f:
        raise ShapeError(f"linear expects input [..., {f}], got {xd.shape}")
    out = xd @ wd.T + bd

    def back(g):
        if xd.ndim == 1:
            gw = np.outer(g, xd)
            gb = g
        else:
            gw = g.T @ xd
            gb = g.sum(axis=0)
        return g @ wd, gw, gb

    return _emit("linear", out, (x, weight, bias), back)


def flatten(x: Tensor) -> Tensor:
    """Collapse all non-batch axes. ``[C, L] -> [C*L]``, ``[B, C, L] -> [B, C*L]``."""
    xd = x.data
    if xd.ndim == 2:
        out = xd.reshape(-1)
    elif xd.ndim == 3:
        out = xd.reshape(xd.shape[0], -1)
    else:
        raise ShapeError(f"flatten expects rank 2 or 3, got {xd.shape}")
    shape = xd.shape

    def back(g):
        return (g.reshape(shape),)

    return _emit("flatten", out, (x,), back)


def split_last(x: Tensor, at: int) -> tuple[Tensor, Tensor]:
    """Split the last axis into ``[:at]`` and ``[at:]``."""
    xd = x.data
    if not 0 < at < xd.shape[-1]:
        raise ShapeError(f"cannot split axis of length {xd.shape[-1]} at {at}")
    shape = xd.shape

    def make(sl):
        def back(g):
            full = np.zeros(shape, dtype=g.dtype)
            full[..., sl] = g
            return (full,)

        return _emit("slice", np.ascontiguousarray(xd[..., sl]), (x,), back)

    return make(slice(0, at)), make(slice(at, None))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to ``[lo, hi]``; gradient flows only where ``x`` was inside."""
    xd = x.data
    inside = (xd >= lo) & (xd <= hi)
    out = np.clip(xd, lo, hi).astype(xd.dtype, copy=False)

    def back(g):
        return (g * inside,)

    return _emit("clamp", out, (x,), back)


def weighted_sum(a: Tensor, b: Tensor, weight: float) -> Tensor:
    """Scalar ``a + weight * b`` in the operands' precision."""
    if a.data.size != 1 or b.data.size != 1:
        raise ShapeError("weighted_sum takes scalar tensors")
    dt = a.data.dtype
    w = dt.type(weight)
    out = np.asarray(a.data + w * b.data, dtype=dt)

    def back(g):
        return g, g * w

    return _emit("weighted_sum", out, (a, b), back)


def custom_op(op: str, out: np.ndarray, inputs: tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    """Record a fused op defined outside this module (used by the loss terms)."""
    return _emit(op, out, inputs, backward)
