"""Acceptance gate: the eleven release criteria, one test each.

Every test prints a single machine-readable PASS/FAIL line of the form
`criterion <n> <name>: PASS` so the gate can be scanned from the pytest
output (`pytest -v -s tests/test_acceptance.py`).
"""

import itertools
import random
import time
from pathlib import Path

import pytest

from slicedsm.bench import (
    BenchGrid,
    DEFAULT_PAGE_SIZES,
    local_copy_bandwidth,
    run_bandwidth_sweep,
    run_latency_sweep,
)
from slicedsm.core import compute, server
from slicedsm.errors import FrameError
from slicedsm.messages import (
    FrameDecoder,
    Kind,
    Message,
    decode_frame,
    encode_frame,
)
from slicedsm.sim import (
    ClockSkew,
    TraceRecord,
    check_trace,
    format_trace,
    gen_workload,
    parse_trace,
    run,
    serial_oracle,
)
from slicedsm.transport import LatencyModel

from conftest import Scripted, run_ops, small_config

FIXTURES = Path(__file__).parent / "fixtures"


def report(num: int, name: str, ok: bool, detail: str = ""):
    state = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"criterion {num} {name}: {state}{suffix}")
    assert ok, f"criterion {num} {name}{suffix}"


@pytest.fixture(scope="module")
def bulk_sweep():
    """1,000 seeded lock-protected runs shared by criteria 2 and 3."""
    config = small_config()  # 16M GAS, 4K pages, 2 servers, 4 computes
    mismatches = []
    violations = []
    start = time.monotonic()
    for seed in range(1000):
        wl = gen_workload(seed, "lock-protected", config)
        result = run(config, wl)
        if result.image != serial_oracle(config, wl, result.trace).image:
            mismatches.append(seed)
        rep = check_trace(result.trace, config)
        if not rep.ok:
            violations.append((seed, rep.violations))
    return dict(
        mismatches=mismatches,
        violations=violations,
        elapsed=time.monotonic() - start,
        config=config,
    )


class TestCriterion1:
    def test_scenario_conformance(self, config):
        page = 3
        base = page * config.page_size
        start = time.monotonic()

        # scenario 1: read of a Current page
        s = Scripted(config)
        mark = s.mark()
        s.read(0, base, 8)
        seq1 = s.kinds_since(mark, page)

        # scenario 2: read redirected to the holding compute node
        s = Scripted(config)
        s.write(0, base, b"\x11" * 8)
        s.read(1, base, 8)  # forces the downgrade to CurrentOnCompute
        mark = s.mark()
        s.read(2, base, 8)
        seq2 = s.kinds_since(mark, page)

        # scenario 3: write invalidating k = 2 read copies
        s = Scripted(config)
        s.read(1, base, 8)
        s.read(2, base, 8)
        mark = s.mark()
        s.write(0, base, b"\x22" * 8)
        seq3 = s.kinds_since(mark, page)

        # scenario 4: write handed off after the slice deadline
        s = Scripted(config)
        s.write(0, base, b"\x33" * 8)
        mark = s.mark()
        s.write(1, base, b"\x44" * 8)
        seq4 = s.kinds_since(mark, page)

        elapsed = time.monotonic() - start
        ok1 = seq1 == ["READ_REQ", "PAGE_DATA"]
        ok2 = seq2 == ["READ_REQ", "REDIRECT", "COPY_REQ", "PAGE_DATA"]
        ok3 = seq3 == [
            "WRITE_REQ",
            "INVALIDATE", "INVALIDATE",
            "INVALIDATE_ACK", "INVALIDATE_ACK",
            "WRITE_GRANT",
        ]
        ok4 = seq4 in (
            ["WRITE_REQ", "REDIRECT", "HANDOFF_REQ",
             "PRIVILEGE_TRANSFER", "TRANSFER_NOTICE"],
            ["WRITE_REQ", "REDIRECT", "HANDOFF_REQ",
             "TRANSFER_NOTICE", "PRIVILEGE_TRANSFER"],
        )
        report(
            1, "scenario-conformance",
            ok1 and ok2 and ok3 and ok4 and elapsed < 1.0,
            f"{seq1=} {seq2=} {seq3=} {seq4=} {elapsed=:.2f}s",
        )


class TestCriterion2:
    def test_coherence_oracle(self, bulk_sweep):
        ok = not bulk_sweep["mismatches"] and bulk_sweep["elapsed"] < 120
        report(
            2, "coherence-oracle", ok,
            f"1000 runs, {len(bulk_sweep['mismatches'])} mismatches, "
            f"{bulk_sweep['elapsed']:.1f}s",
        )


class TestCriterion3:
    def test_single_writer_and_grant_safety(self, bulk_sweep):
        config = bulk_sweep["config"]
        model = LatencyModel()
        flagged = {}
        for name in ("single_writer_violation", "slice_violation"):
            text = (FIXTURES / f"{name}.trace").read_text()
            rep = check_trace(parse_trace(text, config, model), config)
            flagged[name] = not rep.ok
        ok = not bulk_sweep["violations"] and all(flagged.values())
        report(
            3, "single-writer-grant-safety", ok,
            f"{len(bulk_sweep['violations'])} violating runs, "
            f"negative fixtures flagged: {flagged}",
        )


class TestCriterion4:
    def test_slice_lower_bound(self, config):
        page = 1
        base = page * config.page_size
        failures = []
        for offset, drift in itertools.product(
            (-5_000_000, 0, 5_000_000), (0.5, 1.0, 1.5)
        ):
            skew = ClockSkew(offsets={compute(0): offset}, drifts={compute(0): drift})
            s = Scripted(config, skew=skew)
            s.write(0, base, b"\x01")
            s.write(1, base, b"\x02")
            grant = next(
                r for r in s.cluster.trace
                if r.kind is Kind.WRITE_GRANT and r.page == page
            )
            transfer = next(
                r for r in s.cluster.trace
                if r.kind is Kind.PRIVILEGE_TRANSFER and r.page == page
            )
            clock = skew.clock_for(compute(0))
            held = clock.local(transfer.send_time) - clock.local(grant.time)
            if held < config.slice_len:  # tolerance 0
                failures.append((offset, drift, held))
        report(4, "slice-lower-bound", not failures, f"9 skew combos, {failures=}")


class TestCriterion5:
    def test_no_spontaneous_relinquish(self, config):
        idle = int(10.5 * config.slice_len)
        result = run_ops(
            config,
            {0: [("write", 0, b"\x01" * 64), ("delay", idle), ("write", 0, b"\x02")]},
        )
        outgoing = [
            r for r in result.trace
            if r.src == compute(0)
            and r.kind in (Kind.PRIVILEGE_TRANSFER, Kind.TRANSFER_NOTICE, Kind.WRITEBACK)
        ]
        grants = [r for r in result.trace if r.kind is Kind.WRITE_GRANT]
        ok = not outgoing and len(grants) == 1
        report(
            5, "no-spontaneous-relinquish", ok,
            f"idle 10.5 slices, {len(outgoing)} relinquish messages",
        )


class TestCriterion6:
    def test_fifo_write_queue(self, config):
        page = 2
        base = page * config.page_size
        bad = []
        for seed in range(100):
            rnd = random.Random(seed)
            delays = rnd.sample(range(1, 64), 4)
            ops = {
                i: [("delay", delays[i] * 1000), ("write", base, bytes([i + 1]))]
                for i in range(4)
            }
            result = run_ops(config, ops)
            arrival, acquired = [], []
            for r in result.trace:
                if r.page != page:
                    continue
                if r.kind is Kind.WRITE_REQ and r.src not in arrival:
                    arrival.append(r.src)
                elif r.kind in (Kind.WRITE_GRANT, Kind.PRIVILEGE_TRANSFER):
                    acquired.append(r.dst)
            if arrival != acquired:
                bad.append(seed)
        report(6, "fifo-write-queue", not bad, f"100 seeds, out of order: {bad}")


class TestCriterion7:
    def test_latency_cache_invariance(self):
        grid = BenchGrid(gas_size=16 << 20, page_sizes=tuple(DEFAULT_PAGE_SIZES))
        samples = run_latency_sweep(grid, LatencyModel(), reps=3)
        by = {(s.op, s.page_size, s.cache_size): s.value for s in samples}
        caches = sorted({s.cache_size for s in samples})
        worst = 0.0
        for op in ("ReadLatency", "WriteLatency"):
            for page in grid.page_sizes:
                vals = [by[(op, page, c)] for c in caches]
                worst = max(worst, max(vals) / min(vals))
        report(
            7, "latency-cache-invariance", worst <= 1.05,
            f"max/min across cache sizes = {worst:.4f}",
        )


class TestCriterion8:
    def test_cached_read_bandwidth(self):
        model = LatencyModel()
        grid = BenchGrid(
            gas_size=16 << 20,
            page_sizes=tuple(DEFAULT_PAGE_SIZES),
            cache_sizes=(16 << 20,),
        )
        samples = run_bandwidth_sweep(grid, model)
        ratios = {}
        for s in samples:
            if s.op == "ReadBW":
                local = local_copy_bandwidth(model, s.page_size, grid.gas_size)
                ratios[s.page_size] = s.value / local
        ok = all(r >= 0.9 for r in ratios.values())
        detail = ", ".join(f"{p}: {r:.3f}" for p, r in sorted(ratios.items()))
        report(8, "cached-read-bandwidth", ok, f"warm ReadBW / local BW: {detail}")


class TestCriterion9:
    def test_determinism(self, config):
        bad = []
        for seed in range(20):
            wl = gen_workload(seed, "write-contended", config)
            a = format_trace(run(config, wl).trace)
            b = format_trace(run(config, wl).trace)
            if a != b:
                bad.append(seed)
        report(9, "determinism", not bad, f"20 seeds, diverging: {bad}")


class TestCriterion10:
    def test_wire_round_trip(self):
        rnd = random.Random(0)
        kinds = list(Kind)
        bad = 0
        sample = []
        for _ in range(10_000):
            msg = Message(
                rnd.choice(kinds),
                rnd.randrange(2**64),
                compute(rnd.randrange(0x8000)) if rnd.random() < 0.5
                else server(rnd.randrange(0x8000)),
                rnd.randrange(2**64),
                rnd.randbytes(rnd.randrange(0, 64)),
            )
            if decode_frame(encode_frame(msg)) != msg:
                bad += 1
            if len(sample) < 100:
                sample.append(msg)

        truncation_ok = True
        for msg in sample:
            frame = encode_frame(msg)
            cut = rnd.randrange(len(frame))
            with pytest.raises(FrameError):
                decode_frame(frame[:cut])
            decoder = FrameDecoder()
            assert decoder.feed(frame[:cut]) == []
            if decoder.pending_bytes != cut:  # partial input must stay buffered
                truncation_ok = False
            if decoder.feed(frame[cut:]) != [msg]:
                truncation_ok = False
        report(
            10, "wire-round-trip", bad == 0 and truncation_ok,
            f"10000 messages, {bad} mismatches",
        )


class TestCriterion11:
    def test_sync_primitives(self, config):
        sync_violations = []
        for seed in range(100):
            wl = gen_workload(seed, "lock-protected", config)
            rep = check_trace(run(config, wl).trace, config)
            if any(kind in ("mutex", "barrier") for kind, _ in rep.violations):
                sync_violations.append(seed)

        mutex_fixture = [
            TraceRecord(100, server(0), compute(0), Kind.LOCK_GRANT, 1, 1, 90),
            TraceRecord(200, server(0), compute(1), Kind.LOCK_GRANT, 1, 2, 190),
        ]
        barrier_fixture = [
            TraceRecord(100, compute(0), server(0), Kind.BARRIER_ENTER, 9, 1, 90,
                        extra=4),
            TraceRecord(200, server(0), compute(0), Kind.BARRIER_RELEASE, 9, 2, 190),
        ]
        mutex_flagged = not check_trace(mutex_fixture, config).ok
        barrier_flagged = not check_trace(barrier_fixture, config).ok
        ok = not sync_violations and mutex_flagged and barrier_flagged
        report(
            11, "sync-primitives", ok,
            f"100 runs, violations in {sync_violations}, "
            f"fixtures flagged: mutex={mutex_flagged} barrier={barrier_flagged}",
        )
