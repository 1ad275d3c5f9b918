"""End-to-end fusion: colour routing, dataset evaluation and timing."""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .dataset import DatasetIndex, load_all, load_pair
from .imageio import Image, rgb_to_yuv, yuv_to_rgb
from .metrics import MetricsReport, evaluate_pair
from .network import ModelParams, fuse_forward


def fuse_gray(ir, vi, params: ModelParams) -> Image:
    ir = ir.data if isinstance(ir, Image) else ir
    vi = vi.data if isinstance(vi, Image) else vi
    return Image(fuse_forward(ir, vi, params).astype(np.float64))


def fuse_rgb_planes(ir: Image, rgb: Image, params: ModelParams) -> tuple[Image, Image, Image]:
    """Fused luma with the visible image's own chroma planes, untouched."""
    y, u, v = rgb_to_yuv(rgb)
    return fuse_gray(ir, y, params), u, v


def fuse_rgb_pipeline(ir: Image, rgb: Image, params: ModelParams) -> Image:
    """Fuse the visible image's Y channel with IR and convert back to RGB."""
    if ir.channels != 1:
        raise ValueError("infrared input must be grayscale")
    if ir.size != rgb.size:
        raise ValueError(f"IR is {ir.width}x{ir.height} but RGB is {rgb.width}x{rgb.height}")
    return yuv_to_rgb(*fuse_rgb_planes(ir, rgb, params))


def evaluate_dataset(dataset: DatasetIndex, params: ModelParams) -> MetricsReport:
    """Fuse every readable pair and score it; ``seconds`` is fusion wall time."""
    report = MetricsReport()
    names, pairs, _ = load_all(dataset)
    for name, (ir, vi) in zip(names, pairs):
        t0 = time.perf_counter()
        fused = fuse_forward(ir, vi, params)
        seconds = time.perf_counter() - t0
        report.add(evaluate_pair(fused, ir, vi, name, seconds))
    return report


@dataclass
class BenchRow:
    pair: str
    times: list[float]

    @property
    def seconds(self) -> float:
        return statistics.fmean(self.times)

    @property
    def variance(self) -> float:
        return statistics.variance(self.times) if len(self.times) > 1 else 0.0


@dataclass
class BenchReport:
    rows: list[BenchRow]

    @property
    def mean(self) -> float:
        return statistics.fmean(r.seconds for r in self.rows)

    def lines(self) -> list[str]:
        out = [f"{r.pair}\t{r.seconds:.3f}s\tvar {r.variance:.3e}" for r in self.rows]
        out.append(f"mean\t{self.mean:.3f}s")
        return out


def time_fusion(ir: np.ndarray, vi: np.ndarray, params: ModelParams, repeats: int = 1) -> list[float]:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fuse_forward(ir, vi, params)
        times.append(time.perf_counter() - t0)
    return times


def bench_runtime(pairs, params: ModelParams, repeats: int = 1) -> BenchReport:
    """Single-threaded wall-clock time per fused pair.

    ``pairs`` is a :class:`DatasetIndex` or a list of ``(name, ir, vi)``.
    One untimed warm-up fusion runs first.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    if isinstance(pairs, DatasetIndex):
        names, arrays, _ = load_all(pairs)
        pairs = [(n, a, b) for n, (a, b) in zip(names, arrays)]
    if not pairs:
        raise ValueError("nothing to benchmark")
    with threadpool_limits(1):
        _, ir0, vi0 = pairs[0]
        fuse_forward(ir0, vi0, params)
        rows = [BenchRow(name, time_fusion(ir, vi, params, repeats)) for name, ir, vi in pairs]
    return BenchReport(rows)


__all__ = ["fuse_gray", "fuse_rgb_planes", "fuse_rgb_pipeline", "evaluate_dataset",
           "bench_runtime", "BenchReport", "BenchRow", "time_fusion", "load_pair"]
