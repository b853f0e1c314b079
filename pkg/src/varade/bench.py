"""Inference-frequency benchmark."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass
class BenchReport:
    frequency_hz: float
    wall_s: float
    p50_ms: float
    p95_ms: float
    p99_ms: float
    iterations: int
    warmup_excluded: int
    threads: int = 1

    def to_text(self) -> str:
        return (
            f"inference frequency: {self.frequency_hz:.3f} Hz\n"
            f"measured wall-clock: {self.wall_s:.4f} s over {self.iterations} inferences"
            f" ({self.threads} thread{'s' if self.threads > 1 else ''})\n"
            f"latency p50/p95/p99: {self.p50_ms:.3f} / {self.p95_ms:.3f} / {self.p99_ms:.3f} ms\n"
            f"warm-up iterations excluded: {self.warmup_excluded}"
        )

    def to_record(self) -> dict:
        return {
            "frequency_hz": self.frequency_hz,
            "wall_s": self.wall_s,
            "p50_ms": self.p50_ms,
            "p95_ms": self.p95_ms,
            "p99_ms": self.p99_ms,
            "iterations": self.iterations,
            "warmup_excluded": self.warmup_excluded,
            "threads": self.threads,
        }


def bench_throughput(
    infer: Callable[[object], object],
    inputs: Sequence[object],
    iterations: int,
    warmup: int = 10,
    threads: int = 1,
    clock: Callable[[], float] = time.perf_counter,
) -> BenchReport:
    """Time ``infer`` on pre-built ``inputs`` (cycled).

    Warm-up calls run first and are never timed. With ``threads > 1`` each
    thread performs ``iterations`` calls concurrently and the frequency is the
    aggregate completion rate.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not inputs:
        raise ValueError("need at least one pre-built input")
    n_in = len(inputs)
    for i in range(warmup):
        infer(inputs[i % n_in])

    latencies: list[np.ndarray] = [np.empty(0)] * threads

    def worker(slot: int) -> tuple[float, float]:
        # back-to-back stamps: per-call latencies sum to the measured span
        stamps = np.empty(iterations + 1)
        stamps[0] = clock()
        for i in range(iterations):
            infer(inputs[(i + slot) % n_in])
            stamps[i + 1] = clock()
        latencies[slot] = np.diff(stamps)
        return stamps[0], stamps[-1]

    if threads == 1:
        start, end = worker(0)
        wall = end - start
    else:
        barrier = threading.Barrier(threads + 1)

        def run(slot):
            barrier.wait()
            worker(slot)

        pool = [threading.Thread(target=run, args=(k,)) for k in range(threads)]
        for th in pool:
            th.start()
        barrier.wait()
        start = clock()
        for th in pool:
            th.join()
        wall = clock() - start

    lat_ms = np.concatenate(latencies) * 1e3
    done = iterations * threads
    p50, p95, p99 = np.percentile(lat_ms, [50, 95, 99])
    return BenchReport(
        frequency_hz=done / wall if wall > 0 else float("inf"),
        wall_s=wall,
        p50_ms=float(p50),
        p95_ms=float(p95),
        p99_ms=float(p99),
        iterations=done,
        warmup_excluded=warmup,
        threads=threads,
    )
