import numpy as np
import pytest

from weavenet.bench import (
    EQUIVALENCE_TOL,
    DATA_COLUMNS,
    BenchReport,
    ModeComparison,
    bench_pyramid,
    compare_modes,
    data_row,
    masks_label,
    run_bench,
    timing_row,
)
from weavenet.errors import EquivalenceError, ValidationError
from weavenet.weave import WeaveConfig, flops_weave, init_params, weave_forward


def tiny_config(**overrides) -> WeaveConfig:
    base = dict(
        k=2,
        iterations=2,
        woven_scales=(0, 1, 2),
        raw_channels=(4, 4, 4, 4),
        pyramid_sizes=(8, 4, 2, 1),
        seed=17,
    )
    base.update(overrides)
    return WeaveConfig(**base)


class TestRunBench:
    def test_single_sample_report(self):
        cfg = tiny_config()
        report = run_bench(cfg, "simplified", warmup=0, reps=1)
        assert len(report.times) == 1
        assert report.warmup == 0 and report.reps == 1 and report.batch == 1
        assert report.mode == "simplified"
        assert report.flops == flops_weave(cfg, "simplified")
        assert report.mean_time > 0.0
        assert report.stddev_time == 0.0
        assert report.throughput > 0.0

    def test_flops_identical_across_runs(self):
        cfg = tiny_config()
        a = run_bench(cfg, "naive", warmup=0, reps=2)
        b = run_bench(cfg, "naive", warmup=0, reps=2)
        assert a.flops == b.flops
        assert a.flops.total == b.flops.total

    def test_measurement_never_alters_outputs(self):
        cfg = tiny_config()
        report = run_bench(cfg, "naive", warmup=1, reps=2, batch=2)
        fresh = weave_forward(bench_pyramid(cfg), cfg, init_params(cfg), "naive")
        for a, b in zip(report.outputs, fresh):
            assert np.array_equal(a.data, b.data)

    def test_simplified_flops_lower_at_depth(self):
        cfg = WeaveConfig(k=16, iterations=5)
        naive = flops_weave(cfg, "naive")
        simplified = flops_weave(cfg, "simplified")
        assert simplified.total < naive.total

    def test_stddev_and_throughput_formulas(self):
        cfg = tiny_config(iterations=1)
        report = run_bench(cfg, "simplified", warmup=0, reps=3, batch=2)
        times = np.array(report.times)
        assert report.mean_time == pytest.approx(times.mean(), rel=1e-12)
        assert report.stddev_time == pytest.approx(times.std(), rel=1e-9)
        assert report.stddev_time >= 0.0
        assert report.throughput == pytest.approx(6.0 / times.sum(), rel=1e-12)
        assert report.flops_per_second == pytest.approx(
            report.flops.total * report.throughput, rel=1e-12
        )

    def test_rejects_bad_counts(self):
        cfg = tiny_config()
        with pytest.raises(ValidationError):
            run_bench(cfg, "naive", reps=0)
        with pytest.raises(ValidationError):
            run_bench(cfg, "naive", warmup=-1)
        with pytest.raises(ValidationError):
            run_bench(cfg, "naive", batch=0)
        with pytest.raises(ValidationError):
            run_bench(cfg, "fast")


class TestCompareModes:
    def test_equivalence_gate_and_ratios(self):
        cfg = tiny_config(iterations=3)
        cmp = compare_modes(cfg, warmup=0, reps=1)
        assert cmp.worst_deviation <= EQUIVALENCE_TOL
        assert cmp.flop_ratio > 1.0
        assert cmp.time_ratio > 0.0
        assert cmp.naive.flops.total > cmp.simplified.flops.total

    def test_single_iteration_flop_ratio_is_one(self):
        cmp = compare_modes(tiny_config(iterations=1), warmup=0, reps=1)
        assert cmp.flop_ratio == 1.0

    def test_corrupted_partition_aborts_with_location(self):
        cfg = tiny_config(iterations=2)
        with pytest.raises(EquivalenceError) as err:
            compare_modes(cfg, warmup=0, reps=1, corrupt_block=(1, 2))
        worst = err.value.worst
        assert worst is not None
        assert worst.deviation > EQUIVALENCE_TOL
        assert "scale" in str(err.value)

    def test_zero_iterations_ratio_is_one(self):
        cmp = compare_modes(tiny_config(iterations=0), warmup=0, reps=1)
        assert cmp.flop_ratio == 1.0
        assert cmp.worst_deviation == 0.0


class TestLabelsAndRows:
    def test_masks_label(self):
        assert masks_label(tiny_config()) == "both"
        assert masks_label(tiny_config(enable_bottom_up=False)) == "top-down-only"
        assert masks_label(tiny_config(enable_top_down=False)) == "bottom-up-only"
        assert (
            masks_label(tiny_config(enable_top_down=False, enable_bottom_up=False)) == "none"
        )

    def test_data_row_is_deterministic_and_aligned(self):
        cfg = tiny_config()
        a = run_bench(cfg, "naive", warmup=0, reps=1)
        b = run_bench(cfg, "naive", warmup=0, reps=1)
        assert data_row(a, 1.5, 0.0) == data_row(b, 1.5, 0.0)
        assert len(data_row(a, 1.5, 0.0)) == len(DATA_COLUMNS)

    def test_timing_row_shape(self):
        report = run_bench(tiny_config(), "simplified", warmup=0, reps=2)
        row = timing_row(report)
        assert row[0] == "simplified"
        assert len(row) == 11
