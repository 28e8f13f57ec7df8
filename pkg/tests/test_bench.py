"""Benchmark sweeps, CSV emission, and trend assertions."""

import csv

import pytest

from slicedsm.bench import (
    BenchGrid,
    BenchSample,
    assert_trends,
    default_cache_sizes,
    emit_csv,
    local_copy_bandwidth,
    run_bandwidth_sweep,
    run_latency_sweep,
)
from slicedsm.transport import LatencyModel

SMALL_GRID = BenchGrid(
    gas_size=1 << 20,
    page_sizes=(4096, 16384),
    cache_sizes=(1 << 18, 1 << 20),
)


@pytest.fixture(scope="module")
def small_samples():
    model = LatencyModel()
    return (
        run_latency_sweep(SMALL_GRID, model, reps=3)
        + run_bandwidth_sweep(SMALL_GRID, model)
    )


class TestGrid:
    def test_default_cache_sizes_scale_with_gas(self):
        assert default_cache_sizes(16 << 20) == [2 << 20, 4 << 20, 8 << 20, 16 << 20]

    def test_cells_cover_the_cross_product(self):
        cells = list(SMALL_GRID.cells())
        assert len(cells) == 4
        assert (4096, 1 << 20) in cells

    def test_config_for_carries_geometry(self):
        cfg = SMALL_GRID.config_for(4096, 1 << 18)
        assert (cfg.gas_size, cfg.page_size, cfg.cache_size) == (1 << 20, 4096, 1 << 18)


class TestSweeps:
    def test_latency_sweep_shape(self, small_samples):
        lat = [s for s in small_samples if s.op.endswith("Latency")]
        assert len(lat) == 8  # 2 ops x 4 cells
        assert all(s.backend == "Sim" and s.value > 0 for s in lat)

    def test_bandwidth_sweep_shape(self, small_samples):
        bw = [s for s in small_samples if s.op.endswith("BW")]
        assert len(bw) == 8
        assert all(s.value > 0 for s in bw)

    def test_sweeps_are_deterministic(self):
        model = LatencyModel()
        grid = BenchGrid(gas_size=1 << 20, page_sizes=(4096,), cache_sizes=(1 << 20,))
        assert run_latency_sweep(grid, model, reps=3) == run_latency_sweep(
            grid, model, reps=3
        )

    def test_local_copy_bandwidth_positive_and_page_independent_order(self):
        model = LatencyModel()
        small = local_copy_bandwidth(model, 4096, 1 << 20)
        large = local_copy_bandwidth(model, 1 << 20, 1 << 20)
        assert small > 0 and large > 0
        assert large >= small  # fewer per-page overheads on bigger chunks


class TestCsv:
    def test_emit_and_read_back(self, tmp_path, small_samples):
        path = tmp_path / "bench.csv"
        emit_csv(small_samples, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["op", "page_size", "cache_size", "backend", "value"]
        assert len(rows) == len(small_samples) + 1

    def test_empty_sample_set_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_csv([], tmp_path / "bench.csv")


class TestTrends:
    def test_real_grid_passes(self, small_samples):
        report = assert_trends(small_samples, SMALL_GRID)
        assert report.ok, str(report)

    def test_cache_dependent_latency_fails(self, small_samples):
        forged = [
            BenchSample(s.op, s.page_size, s.cache_size, s.backend,
                        s.value * (3.0 if s.cache_size == 1 << 18 else 1.0))
            if s.op.endswith("Latency") else s
            for s in small_samples
        ]
        report = assert_trends(forged, SMALL_GRID)
        failed = {c.name for c in report.checks if not c.passed}
        assert "latency-cache-invariance" in failed

    def test_shrinking_latency_fails_monotonicity(self, small_samples):
        forged = [
            BenchSample(s.op, s.page_size, s.cache_size, s.backend, s.value / 100)
            if s.op.endswith("Latency") and s.page_size == 16384 else s
            for s in small_samples
        ]
        report = assert_trends(forged, SMALL_GRID)
        failed = {c.name for c in report.checks if not c.passed}
        assert "latency-monotone-in-page-size" in failed

    def test_slow_cached_reads_fail(self, small_samples):
        forged = [
            BenchSample(s.op, s.page_size, s.cache_size, s.backend, s.value / 10)
            if s.op == "ReadBW" and s.cache_size == 1 << 20 else s
            for s in small_samples
        ]
        report = assert_trends(forged, SMALL_GRID)
        failed = {c.name for c in report.checks if not c.passed}
        assert "cached-read-at-local-speed" in failed

    def test_report_prints_one_line_per_check(self, small_samples):
        report = assert_trends(small_samples, SMALL_GRID)
        lines = str(report).splitlines()
        assert len(lines) == len(report.checks)
        assert all(line.startswith("[PASS]") for line in lines)
