"""Streaming-vs-batch cost measurement behind the `bench` command.

The streaming update touches a fixed-size state, so its per-step latency
must not depend on how long the path already is; recomputing the full
signature from scratch after every step costs O(n) per step instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .signature import SignatureState, signature_batch


@dataclass
class BenchReport:
    dims: int
    depth: int
    steps: int
    stream_early_us: float = float("nan")  # median per-step latency near step 100
    stream_late_us: float = float("nan")   # median per-step latency near the end
    stream_ratio: float = float("nan")
    batch_points: list[tuple[int, float]] = field(default_factory=list)  # (N, seconds per full recompute)
    batch_slope_us_per_step: float = float("nan")

    def lines(self) -> list[str]:
        out = [
            f"dims={self.dims} depth={self.depth} steps={self.steps}",
            f"stream per-step: early {self.stream_early_us:.2f} us, "
            f"late {self.stream_late_us:.2f} us, ratio {self.stream_ratio:.3f}",
        ]
        for n, sec in self.batch_points:
            out.append(f"batch recompute N={n}: {sec * 1e3:.2f} ms ({sec / n * 1e6:.2f} us/step)")
        if self.batch_points:
            out.append(f"batch slope: {self.batch_slope_us_per_step:.3f} us per extra step")
        return out


def run_bench(dims: int, depth: int, steps: int, seed: int = 0, window: int = 100) -> BenchReport:
    """Time per-step streaming updates and full batch recomputations.

    The streaming comparison takes median per-step latency over the first
    `window` steps versus the last `window` steps. The batch comparison
    times one full signature recomputation at several prefix lengths and
    fits a line through (N, seconds).
    """
    rng = np.random.default_rng(seed)
    steps = max(steps, 2 * window)
    deltas = rng.uniform(-1, 1, size=(steps, dims))
    report = BenchReport(dims=dims, depth=depth, steps=steps)

    # streaming: per-step latency along one long stream
    state = SignatureState(dims, depth)
    state.update(deltas[0])  # warm caches before timing
    state = SignatureState(dims, depth)
    per_step = np.empty(steps)
    for n in range(steps):
        t0 = time.perf_counter()
        state.update(deltas[n])
        per_step[n] = time.perf_counter() - t0
    report.stream_early_us = float(np.median(per_step[:window]) * 1e6)
    report.stream_late_us = float(np.median(per_step[-window:]) * 1e6)
    report.stream_ratio = report.stream_late_us / report.stream_early_us

    # batch: one full recomputation at growing prefix lengths
    if depth >= 1:
        points = sorted({window, steps // 8, steps // 4, steps // 2, steps})
        points = [n for n in points if n >= 2]
        path = np.vstack([np.zeros(dims), np.cumsum(deltas, axis=0)])
        for n in points:
            t0 = time.perf_counter()
            signature_batch(path[: n + 1], depth)
            report.batch_points.append((n, time.perf_counter() - t0))
        ns = np.array([p[0] for p in report.batch_points], dtype=np.float64)
        ts = np.array([p[1] for p in report.batch_points])
        slope = np.polyfit(ns, ts, 1)[0]
        report.batch_slope_us_per_step = float(slope * 1e6)
    return report
