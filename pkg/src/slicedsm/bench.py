"""Latency/bandwidth benchmark: first-byte access latency and full-sweep
memset/memcpy bandwidth versus page size and cache size.

The sim backend measures virtual time, which makes every sample
deterministic: network cost comes from the latency model and local
memory cost from its `local_bandwidth` term. The stream backend measures
wall-clock time against live TCP memory servers and is exempt from the
trend assertions.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

from .core import GasConfig
from .node_api import StreamSession, dsm_map
from .sim import SimCluster
from .transport import LatencyModel

M = 1 << 20
K = 1 << 10

DEFAULT_GAS = 16 * M
DEFAULT_PAGE_SIZES = [4 * K, 16 * K, 64 * K, 256 * K, 512 * K, 1 * M]


def default_cache_sizes(gas_size: int = DEFAULT_GAS) -> list[int]:
    return [gas_size // 8, gas_size // 4, gas_size // 2, gas_size]


@dataclass(frozen=True)
class BenchSample:
    op: str  # ReadLatency | WriteLatency | ReadBW | WriteBW
    page_size: int
    cache_size: int
    backend: str  # Sim | Stream
    value: float  # latency: microseconds; bandwidth: bytes/second


@dataclass(frozen=True)
class BenchGrid:
    gas_size: int = DEFAULT_GAS
    page_sizes: tuple = tuple(DEFAULT_PAGE_SIZES)
    cache_sizes: tuple = ()
    num_servers: int = 1
    num_computes: int = 1
    slice_len: int = 10_000_000

    def cells(self):
        caches = self.cache_sizes or tuple(default_cache_sizes(self.gas_size))
        for page in self.page_sizes:
            for cache in caches:
                yield page, cache

    def config_for(self, page: int, cache: int) -> GasConfig:
        return GasConfig(
            gas_size=self.gas_size,
            page_size=page,
            cache_size=cache,
            num_servers=self.num_servers,
            num_computes=self.num_computes,
            slice_len=self.slice_len,
        )


def local_copy_bandwidth(model: LatencyModel, page_size: int,
                         gas_size: int = DEFAULT_GAS) -> float:
    """Modeled local memory copy bandwidth in bytes/s, page-chunked."""
    pages = gas_size // page_size
    total_ns = pages * model.copy_ns(page_size)
    return gas_size / (total_ns / 1e9)


def _fresh_session(config: GasConfig, model: LatencyModel):
    cluster = SimCluster(config, model=model)
    return dsm_map(config, backend="sim", cluster=cluster), cluster


def run_latency_sweep(grid: BenchGrid, model: LatencyModel | None = None,
                      reps: int = 9) -> list[BenchSample]:
    """Median cold first-byte read/write latency per grid cell."""
    model = model or LatencyModel()
    samples = []
    for page, cache in grid.cells():
        config = grid.config_for(page, cache)
        for op, cmd in (("ReadLatency", "read"), ("WriteLatency", "write")):
            values = []
            for _ in range(reps):
                session, cluster = _fresh_session(config, model)
                t0 = cluster.now
                if cmd == "read":
                    session.read(0, 1)
                else:
                    session.write(0, b"\x00")
                values.append((cluster.now - t0) / 1e3)  # ns -> us
            samples.append(BenchSample(op, page, cache, "Sim", statistics.median(values)))
    return samples


def run_bandwidth_sweep(grid: BenchGrid,
                        model: LatencyModel | None = None) -> list[BenchSample]:
    """Full-GAS memset (write) then memcpy (read) bandwidth per grid cell.

    The read pass runs after the write pass, so with a partial cache the
    cold reads exercise the writeback/eviction paths deterministically.
    """
    model = model or LatencyModel()
    samples = []
    for page, cache in grid.cells():
        config = grid.config_for(page, cache)
        session, cluster = _fresh_session(config, model)
        t0 = cluster.now
        session.write(0, bytes(grid.gas_size))
        write_elapsed = cluster.now - t0
        t1 = cluster.now
        session.read(0, grid.gas_size)
        read_elapsed = cluster.now - t1
        samples.append(
            BenchSample("WriteBW", page, cache, "Sim",
                        grid.gas_size / (write_elapsed / 1e9))
        )
        samples.append(
            BenchSample("ReadBW", page, cache, "Sim",
                        grid.gas_size / (read_elapsed / 1e9))
        )
    return samples


def run_stream_bench(config: GasConfig, hosts: dict, node_index: int = 0,
                     reps: int = 9) -> list[BenchSample]:
    """Wall-clock measurement against live TCP servers (one grid cell)."""
    session = StreamSession(config, node_index, hosts=hosts)
    try:
        lat = []
        for rep in range(reps):
            page = rep % config.num_pages
            t0 = time.monotonic_ns()
            session.read(page * config.page_size, 1)
            lat.append((time.monotonic_ns() - t0) / 1e3)
        samples = [
            BenchSample("ReadLatency", config.page_size, config.cache_size,
                        "Stream", statistics.median(lat))
        ]
        t0 = time.monotonic_ns()
        session.write(0, bytes(config.gas_size))
        write_elapsed = time.monotonic_ns() - t0
        t1 = time.monotonic_ns()
        session.read(0, config.gas_size)
        read_elapsed = time.monotonic_ns() - t1
        samples.append(
            BenchSample("WriteBW", config.page_size, config.cache_size, "Stream",
                        config.gas_size / (write_elapsed / 1e9))
        )
        samples.append(
            BenchSample("ReadBW", config.page_size, config.cache_size, "Stream",
                        config.gas_size / (read_elapsed / 1e9))
        )
        return samples
    finally:
        session.close()


def emit_csv(samples: list[BenchSample], path):
    """Write samples in stable grid order: op,page_size,cache_size,backend,value."""
    if not samples:
        raise ValueError("refusing to write an empty sample set")
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["op", "page_size", "cache_size", "backend", "value"])
        for s in samples:
            writer.writerow([s.op, s.page_size, s.cache_size, s.backend, s.value])


@dataclass
class TrendCheck:
    name: str
    passed: bool
    detail: str


@dataclass
class TrendReport:
    checks: list[TrendCheck]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self):
        lines = []
        for c in self.checks:
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
        return "\n".join(lines)


def assert_trends(samples: list[BenchSample], grid: BenchGrid,
                  model: LatencyModel | None = None) -> TrendReport:
    """Check the headline qualitative claims on a sim-backend sample grid:
    latency depends only on page size, latency grows with page size, a
    full-GAS cache reads at local-memory speed, and bandwidth is sane.
    """
    model = model or LatencyModel()
    sims = [s for s in samples if s.backend == "Sim"]
    by = {}
    for s in sims:
        by[(s.op, s.page_size, s.cache_size)] = s.value
    pages = sorted({s.page_size for s in sims})
    caches = sorted({s.cache_size for s in sims})
    checks = []

    # (a) latency invariant across cache sizes (<= 1.05 max/min per page size)
    worst = 0.0
    for op in ("ReadLatency", "WriteLatency"):
        for page in pages:
            vals = [by[(op, page, c)] for c in caches if (op, page, c) in by]
            if len(vals) >= 2:
                worst = max(worst, max(vals) / min(vals))
    checks.append(
        TrendCheck("latency-cache-invariance", worst <= 1.05,
                   f"max/min ratio across cache sizes = {worst:.4f} (limit 1.05)")
    )

    # (b) latency non-decreasing in page size
    monotone = True
    for op in ("ReadLatency", "WriteLatency"):
        for cache in caches:
            vals = [by[(op, p, cache)] for p in pages if (op, p, cache) in by]
            if any(b < a for a, b in zip(vals, vals[1:])):
                monotone = False
    checks.append(
        TrendCheck("latency-monotone-in-page-size", monotone,
                   "latency non-decreasing across the page-size grid")
    )

    # (c) full-GAS cache: warm read bandwidth ~ local copy bandwidth
    full = max(caches) if caches else 0
    ok_c = True
    detail_c = []
    for page in pages:
        got = by.get(("ReadBW", page, full))
        if got is None:
            continue
        local = local_copy_bandwidth(model, page, grid.gas_size)
        ratio = got / local
        detail_c.append(f"{page}: {ratio:.3f}")
        if ratio < 0.9:
            ok_c = False
    checks.append(
        TrendCheck("cached-read-at-local-speed", ok_c,
                   "warm ReadBW / local copy BW per page size: " + ", ".join(detail_c))
    )

    # (d) bandwidth positive and finite everywhere
    import math

    ok_d = all(
        s.value > 0 and math.isfinite(s.value)
        for s in sims
        if s.op in ("ReadBW", "WriteBW")
    )
    checks.append(TrendCheck("bandwidth-sane", ok_d, "all BW values positive, finite"))
    return TrendReport(checks)
