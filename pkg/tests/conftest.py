"""Shared helpers for the test suite."""

from __future__ import annotations

import pytest

from slicedsm.core import GasConfig, compute
from slicedsm.sim import SimCluster, Workload, run


def small_config(**overrides) -> GasConfig:
    base = dict(
        gas_size=16 << 20,
        page_size=4096,
        cache_size=64 * 1024,
        num_servers=2,
        num_computes=4,
        slice_len=10_000_000,
    )
    base.update(overrides)
    return GasConfig(**base)


@pytest.fixture
def config():
    return small_config()


def run_ops(config: GasConfig, ops: dict[int, list[tuple]], skew=None, model=None):
    """Run per-compute op lists (keyed by compute index) to completion."""
    workload = Workload({compute(i): lst for i, lst in ops.items()})
    return run(config, workload, skew=skew, model=model)


class Scripted:
    """Step-by-step cluster driver: one blocking call at a time per node.

    Lets a test interleave operations across compute nodes in a fixed
    order and inspect the trace between steps.
    """

    def __init__(self, config: GasConfig, model=None, skew=None):
        self.cluster = SimCluster(config, model=model, skew=skew)
        self.config = config

    def call(self, node_index: int, op: tuple):
        node = self.cluster.computes[compute(node_index)]
        out = []

        def prog():
            result = yield op
            out.append(result)

        node.run_program(prog())
        while not node.finished:
            assert self.cluster.step(), f"cluster quiescent mid-call on c{node_index}"
        return out[0] if out else None

    def read(self, node_index, addr, length):
        return self.call(node_index, ("read", addr, length))

    def write(self, node_index, addr, data):
        return self.call(node_index, ("write", addr, bytes(data)))

    def mark(self) -> int:
        return len(self.cluster.trace)

    def trace_since(self, mark: int, page: int | None = None):
        records = self.cluster.trace[mark:]
        if page is not None:
            records = [r for r in records if r.page == page]
        return records

    def kinds_since(self, mark: int, page: int | None = None):
        return [r.kind.name for r in self.trace_since(mark, page)]
