"""Streaming inference: ring-buffered windows in, one anomaly score per sample out."""

from __future__ import annotations

import collections
import logging
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Protocol

import numpy as np

from .baselines.iforest import IsoForest
from .baselines.knn import KnnIndex, knn_score_many
from .data import Normalizer
from .evaluation import ScoredPoint
from .model import VaradeModel, forward

logger = logging.getLogger(__name__)


class WindowBuffer:
    """Fixed-capacity ring of C-vectors with an O(1), copy-free ordered view.

    Each sample is written twice, at ``i`` and ``i + T`` of a ``2T`` store, so
    the last ``T`` samples are always one contiguous slice.
    """

    def __init__(self, capacity: int, channels: int, dtype=np.float32):
        if capacity < 1 or channels < 1:
            raise ValueError("capacity and channels must be positive")
        self.capacity = capacity
        self.channels = channels
        self._store = np.zeros((2 * capacity, channels), dtype=dtype)
        self._head = 0  # next write slot in [0, T)
        self.fill = 0

    def push(self, sample) -> None:
        x = np.asarray(sample)
        if x.shape != (self.channels,):
            raise ValueError(f"sample must have {self.channels} components, got shape {x.shape}")
        h = self._head
        self._store[h] = x
        self._store[h + self.capacity] = x
        self._head = (h + 1) % self.capacity
        if self.fill < self.capacity:
            self.fill += 1

    @property
    def full(self) -> bool:
        return self.fill == self.capacity

    def snapshot(self) -> np.ndarray:
        """The last ``min(fill, T)`` samples, oldest first, as ``[n, C]``."""
        end = self._head + self.capacity
        return self._store[end - self.fill : end]

    def window(self) -> np.ndarray:
        """Model input ``[C, T]``; only meaningful once full."""
        return self.snapshot().T

    def clear(self) -> None:
        self._head = 0
        self.fill = 0


def variance_score(logvar: np.ndarray) -> np.ndarray:
    """Mean predicted variance over the channel (last) axis."""
    return np.exp(np.asarray(logvar, dtype=np.float64)).mean(axis=-1)


def score(model: VaradeModel, buffer: WindowBuffer) -> float | None:
    """Anomaly score for the buffered window, or None during warm-up."""
    if not buffer.full:
        return None
    _, logvar = forward(model, buffer.window())
    return float(variance_score(logvar.data))


def score_windows(model: VaradeModel, normalized: np.ndarray, batch: int = 256) -> np.ndarray:
    """Offline equivalent of streaming :func:`score` over a whole ``[N, C]`` array.

    Returns ``N - T + 1`` scores; entry ``i`` belongs to sample ``i + T - 1``.
    """
    t = model.config.window
    x = np.ascontiguousarray(normalized, dtype=model.dtype)
    n = len(x) - t + 1
    if n <= 0:
        return np.zeros(0)
    # [n, C, T] windows as a strided view
    windows = np.lib.stride_tricks.sliding_window_view(x, t, axis=0)
    out = np.empty(n)
    for s in range(0, n, batch):
        _, logvar = forward(model, np.ascontiguousarray(windows[s : s + batch]))
        out[s : s + batch] = variance_score(logvar.data)
    return out


# ---------------------------------------------------------------------------
# detectors
# ---------------------------------------------------------------------------


class Detector(Protocol):
    normalizer: Normalizer
    warmup: int

    @property
    def n_channels(self) -> int: ...

    def process(self, timestamp: float, raw: np.ndarray, label: int | None = None) -> ScoredPoint | None: ...

    def score_array(self, raw: np.ndarray) -> np.ndarray: ...


class VaradeDetector:
    def __init__(self, model: VaradeModel, normalizer: Normalizer):
        if normalizer.n_channels != model.config.channels:
            raise ValueError(
                f"normalizer has {normalizer.n_channels} channels, model expects {model.config.channels}"
            )
        self.model = model
        self.normalizer = normalizer
        self.buffer = WindowBuffer(model.config.window, model.config.channels)
        self.warmup = model.config.window - 1

    @property
    def n_channels(self) -> int:
        return self.model.config.channels

    def process(self, timestamp, raw, label=None):
        self.buffer.push(self.normalizer.apply(raw))
        s = score(self.model, self.buffer)
        return None if s is None else ScoredPoint(timestamp, s, label)

    def score_array(self, raw):
        return score_windows(self.model, self.normalizer.apply(raw))

    def reset(self) -> None:
        self.buffer.clear()


class PointDetector:
    """Per-sample baseline (kNN or Isolation Forest); no warm-up."""

    def __init__(self, model: KnnIndex | IsoForest, normalizer: Normalizer):
        self.model = model
        self.normalizer = normalizer
        self.warmup = 0

    @property
    def n_channels(self) -> int:
        return self.normalizer.n_channels

    def score_array(self, raw):
        x = self.normalizer.apply(raw)
        if isinstance(self.model, KnnIndex):
            return knn_score_many(self.model, x)
        return self.model.score_many(x)

    def process(self, timestamp, raw, label=None):
        return ScoredPoint(timestamp, float(self.score_array(np.asarray(raw)[None])[0]), label)

    def reset(self) -> None:
        pass


# ---------------------------------------------------------------------------
# streams
# ---------------------------------------------------------------------------


class MalformedRecord(ValueError):
    pass


def parse_record(line: str, channels: int) -> tuple[float, np.ndarray, int | None]:
    """``timestamp,v1,...,vC[,label]`` -> (timestamp, values, label)."""
    parts = line.strip().split(",")
    if len(parts) not in (channels + 1, channels + 2):
        raise MalformedRecord(f"expected {channels + 1} or {channels + 2} fields, got {len(parts)}")
    try:
        nums = [float(p) for p in parts]
    except ValueError as e:
        raise MalformedRecord(str(e)) from None
    if not all(np.isfinite(nums)):
        raise MalformedRecord("non-finite value")
    label = None
    if len(parts) == channels + 2:
        label = int(nums[-1])
        if label not in (0, 1):
            raise MalformedRecord(f"label must be 0 or 1, got {nums[-1]}")
    return nums[0], np.asarray(nums[1 : channels + 1], dtype=np.float32), label


@dataclass
class StreamStats:
    received: int = 0
    scored: int = 0
    malformed: int = 0
    dropped: int = 0
    skipped_header: bool = False


def _records(source: Iterable, channels: int, stats: StreamStats) -> Iterator[tuple[float, np.ndarray, int | None]]:
    for item in source:
        if isinstance(item, str):
            if not item.strip():
                continue
            if stats.received == 0 and stats.malformed == 0 and not stats.skipped_header:
                head = item.split(",", 1)[0].strip()
                if head == "timestamp":
                    stats.skipped_header = True
                    continue
            stats.received += 1
            try:
                yield parse_record(item, channels)
            except MalformedRecord as e:
                stats.malformed += 1
                logger.warning("skipping malformed record %d: %s", stats.received, e)
        else:
            stats.received += 1
            ts, values, *rest = item
            values = np.asarray(values, dtype=np.float32)
            if values.shape != (channels,) or not np.all(np.isfinite(values)):
                stats.malformed += 1
                logger.warning("skipping malformed record %d", stats.received)
                continue
            yield float(ts), values, (rest[0] if rest else None)


def detect_stream(
    detector: Detector,
    source: Iterable,
    sink: Callable[[ScoredPoint], object],
    max_pending: int | None = None,
    stats: StreamStats | None = None,
) -> StreamStats:
    """Score every record from ``source`` and hand each :class:`ScoredPoint` to ``sink``.

    ``source`` yields CSV lines (an optional header is skipped) or
    ``(timestamp, values[, label])`` tuples of raw, unnormalized values.
    Malformed records are counted and skipped.

    With ``max_pending`` set, a reader thread queues records for the scoring
    loop. When the queue is full the oldest unscored record is discarded and
    counted in ``stats.dropped``, so a stalled sink never grows memory.
    """
    stats = stats if stats is not None else StreamStats()
    records = _records(source, detector.n_channels, stats)

    def handle(rec):
        point = detector.process(*rec)
        if point is not None:
            stats.scored += 1
            sink(point)

    if max_pending is None:
        for rec in records:
            handle(rec)
        return stats

    if max_pending < 1:
        raise ValueError("max_pending must be >= 1")
    pending: collections.deque = collections.deque()
    lock = threading.Lock()
    ready = threading.Condition(lock)
    done = False
    failure: list[BaseException] = []

    def reader():
        nonlocal done
        try:
            for rec in records:
                with lock:
                    if len(pending) >= max_pending:
                        pending.popleft()
                        stats.dropped += 1
                    pending.append(rec)
                    ready.notify()
        except BaseException as e:  # surfaced in the consumer
            failure.append(e)
        finally:
            with lock:
                done = True
                ready.notify()

    th = threading.Thread(target=reader, daemon=True)
    th.start()
    while True:
        with lock:
            while not pending and not done:
                ready.wait()
            if not pending and done:
                break
            rec = pending.popleft()
        handle(rec)
    th.join()
    if failure:
        raise failure[0]
    return stats
