"""FLOP accounting and wall-clock comparison of the two fusion modes.

FLOP figures are exact integers from the analytic counter and never depend
on timing; wall times cover real forward passes (the simplified mode's
precomputation included) on seeded synthetic pyramids.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import EquivalenceError, ValidationError
from .tensor_core import Tensor
from .weave import (
    BlockParams,
    WeaveConfig,
    WeaveFlops,
    compare_outputs,
    flops_weave,
    init_params,
    weave_forward,
)

EQUIVALENCE_TOL = 1e-9


def masks_label(config: WeaveConfig) -> str:
    if config.enable_top_down and config.enable_bottom_up:
        return "both"
    if config.enable_top_down:
        return "top-down-only"
    if config.enable_bottom_up:
        return "bottom-up-only"
    return "none"


def bench_pyramid(config: WeaveConfig) -> list[Tensor]:
    """Seeded standard-normal raw pyramid used by every benchmark run."""
    rng = np.random.default_rng([config.seed, 4])
    return [
        Tensor(rng.normal(size=(config.raw_channels[i], s, s)))
        for i, s in enumerate(config.pyramid_sizes)
    ]


@dataclass(frozen=True)
class BenchReport:
    """One mode's timing and analytic cost on a fixed config.

    times holds one wall-clock sample per repetition, each covering `batch`
    sequential forward passes. outputs is the last pass's result, kept so
    callers can confirm that measurement never altered the computation.
    """

    mode: str
    k: int
    iterations: int
    masks: str
    warmup: int
    reps: int
    batch: int
    times: tuple[float, ...]
    flops: WeaveFlops
    outputs: list[Tensor] = field(compare=False, repr=False)

    @property
    def total_time(self) -> float:
        return sum(self.times)

    @property
    def mean_time(self) -> float:
        return self.total_time / len(self.times)

    @property
    def stddev_time(self) -> float:
        mean = self.mean_time
        return float(np.sqrt(sum((t - mean) ** 2 for t in self.times) / len(self.times)))

    @property
    def throughput(self) -> float:
        """Forward passes per second over all measured repetitions."""
        return self.batch * self.reps / self.total_time

    @property
    def flops_per_second(self) -> float:
        return self.flops.total * self.throughput


def run_bench(
    config: WeaveConfig,
    mode: str,
    warmup: int = 3,
    reps: int = 20,
    batch: int = 1,
    params: dict[int, BlockParams] | None = None,
    pyramid: list[Tensor] | None = None,
) -> BenchReport:
    """Time `reps` measured repetitions of `batch` forward passes each.

    Warmup passes run unmeasured first; inputs and parameters are seeded
    from the config, so FLOP figures and outputs are identical across runs.
    """
    if reps < 1:
        raise ValidationError(f"reps must be >= 1, got {reps}")
    if warmup < 0:
        raise ValidationError(f"warmup must be >= 0, got {warmup}")
    if batch < 1:
        raise ValidationError(f"batch must be >= 1, got {batch}")
    if params is None:
        params = init_params(config)
    if pyramid is None:
        pyramid = bench_pyramid(config)

    for _ in range(warmup):
        weave_forward(pyramid, config, params, mode)

    times = []
    outputs = None
    for _ in range(reps):
        start = time.perf_counter()
        for _ in range(batch):
            outputs = weave_forward(pyramid, config, params, mode)
        times.append(time.perf_counter() - start)

    return BenchReport(
        mode=mode,
        k=config.k,
        iterations=config.iterations,
        masks=masks_label(config),
        warmup=warmup,
        reps=reps,
        batch=batch,
        times=tuple(times),
        flops=flops_weave(config, mode),
        outputs=outputs,
    )


@dataclass(frozen=True)
class ModeComparison:
    naive: BenchReport
    simplified: BenchReport
    worst_deviation: float

    @property
    def flop_ratio(self) -> float:
        """Naive FLOPs over simplified FLOPs (1.0 when both are zero)."""
        n, s = self.naive.flops.total, self.simplified.flops.total
        if s == 0:
            return 1.0 if n == 0 else float("inf")
        return n / s

    @property
    def time_ratio(self) -> float:
        return self.naive.mean_time / self.simplified.mean_time


def compare_modes(
    config: WeaveConfig,
    warmup: int = 3,
    reps: int = 20,
    batch: int = 1,
    corrupt_block: tuple[int, int] | None = None,
) -> ModeComparison:
    """Benchmark both modes on identical inputs after checking they agree.

    The equivalence gate runs before any timing: if the modes' outputs
    differ by more than the tolerance anywhere, the comparison aborts with
    the worst-mismatch location.
    """
    params = init_params(config)
    pyramid = bench_pyramid(config)
    naive_out = weave_forward(pyramid, config, params, "naive")
    simplified_out = weave_forward(
        pyramid, config, params, "simplified", corrupt_block=corrupt_block
    )
    worst = compare_outputs(naive_out, simplified_out)
    if worst.deviation > EQUIVALENCE_TOL:
        raise EquivalenceError(
            f"modes disagree by {worst.deviation:.3e} at scale {worst.scale}, "
            f"channel {worst.channel}, y {worst.y}, x {worst.x} "
            f"(tolerance {EQUIVALENCE_TOL:.0e})",
            worst=worst,
        )
    naive = run_bench(config, "naive", warmup, reps, batch, params=params, pyramid=pyramid)
    simplified = run_bench(
        config, "simplified", warmup, reps, batch, params=params, pyramid=pyramid
    )
    return ModeComparison(naive=naive, simplified=simplified, worst_deviation=worst.deviation)


DATA_COLUMNS = (
    "mode",
    "k",
    "iterations",
    "masks",
    "flops_precompute",
    "flops_iterations",
    "flops_total",
    "flop_ratio_vs_naive",
    "worst_deviation",
)

TIMING_COLUMNS = (
    "mode",
    "k",
    "iterations",
    "masks",
    "warmup",
    "reps",
    "batch",
    "mean_s",
    "stddev_s",
    "throughput_passes_per_s",
    "flops_per_s",
)


def data_row(report: BenchReport, flop_ratio: float, worst_deviation: float) -> list[str]:
    """Deterministic CSV cells (no wall-clock fields)."""
    return [
        report.mode,
        str(report.k),
        str(report.iterations),
        report.masks,
        str(report.flops.precompute),
        str(sum(report.flops.per_iteration)),
        str(report.flops.total),
        f"{flop_ratio:.6f}",
        f"{worst_deviation:.3e}",
    ]


def timing_row(report: BenchReport) -> list[str]:
    return [
        report.mode,
        str(report.k),
        str(report.iterations),
        report.masks,
        str(report.warmup),
        str(report.reps),
        str(report.batch),
        f"{report.mean_time:.6f}",
        f"{report.stddev_time:.6f}",
        f"{report.throughput:.3f}",
        f"{report.flops_per_second:.3e}",
    ]
