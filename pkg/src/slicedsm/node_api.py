"""Application-facing API: shared-memory reads/writes on the GAS and
remote-memory demand-paging regions.

A session belongs to exactly one compute node and serializes its calls
(one outstanding access). Two backends exist:

* `SimSession` drives a compute node inside a `SimCluster`; each call
  steps the shared event heap until the node's operation completes.
* `StreamSession` runs the same state machine in this process against
  remote memory servers over TCP.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .core import GasConfig, compute
from .errors import AddressError, AllocError, ConnectError, DeadlockError
from .protocol import ComputeNode, NodeEnv
from .sim import DeadlockReport, SimCluster
from .transport import StreamTransport, load_hosts


@dataclass(frozen=True)
class DsmRegion:
    base: int
    len: int
    mode: str  # "shared" or "paging"


class PagingAllocator:
    """Bump allocator from the top of the GAS, page-granular regions."""

    def __init__(self, config: GasConfig):
        self.config = config
        self.floor = config.gas_size  # everything above is allocated

    def alloc(self, length: int) -> DsmRegion:
        if length <= 0:
            raise AllocError("region length must be positive")
        pages = -(-length // self.config.page_size)
        base = self.floor - pages * self.config.page_size
        if base < 0:
            raise AllocError(f"GAS exhausted: cannot place {length} bytes")
        self.floor = base
        return DsmRegion(base, pages * self.config.page_size, "paging")


class _Session:
    """Shared read/write surface over a ComputeNode."""

    def __init__(self, config: GasConfig, allocator: PagingAllocator):
        self.config = config
        self.allocator = allocator
        self.regions: list[DsmRegion] = []

    def _call(self, cmd):
        raise NotImplementedError

    def read(self, addr: int, length: int) -> bytes:
        if length == 0:
            self._check_range(addr, 0)
            return b""
        return self._call(("read", addr, length))

    def write(self, addr: int, data: bytes):
        if len(data) == 0:
            self._check_range(addr, 0)
            return
        self._call(("write", addr, bytes(data)))

    def lock(self, lock_id: int):
        self._call(("lock", lock_id))

    def unlock(self, lock_id: int):
        self._call(("unlock", lock_id))

    def barrier(self, barrier_id: int, expected: int):
        self._call(("barrier", barrier_id, expected))

    def paging_alloc(self, length: int) -> DsmRegion:
        region = self.allocator.alloc(length)
        self.regions.append(region)
        return region

    def _check_range(self, addr, length):
        if addr < 0 or addr + length > self.config.gas_size:
            raise AddressError(f"range [{addr}, {addr + length}) outside GAS")


class SimSession(_Session):
    def __init__(self, cluster: SimCluster, node_index: int = 0):
        allocator = getattr(cluster, "_paging_allocator", None)
        if allocator is None:
            allocator = cluster._paging_allocator = PagingAllocator(cluster.config)
        super().__init__(cluster.config, allocator)
        self.cluster = cluster
        self.node = cluster.computes[compute(node_index)]

    def _call(self, cmd):
        self.node.results = []
        out = []

        def prog():
            result = yield cmd
            out.append(result)

        self.node.run_program(prog())
        while not self.node.finished:
            if not self.cluster.step():
                raise DeadlockError(DeadlockReport(self.cluster.blocked_ops()))
        return out[0] if out else None

    @property
    def virtual_now(self) -> int:
        return self.cluster.now


class _StreamEnv(NodeEnv):
    def __init__(self, transport: StreamTransport):
        self.transport = transport
        self.timers: list[tuple[float, object]] = []

    def send(self, dst, msg):
        self.transport.send(dst, msg)

    def local_now(self):
        return float(time.monotonic_ns())

    def schedule_at_local(self, local_deadline, tag):
        self.timers.append((local_deadline, tag))

    def due_timers(self):
        now = self.local_now()
        due = [t for t in self.timers if t[0] <= now]
        self.timers = [t for t in self.timers if t[0] > now]
        return due

    def next_deadline(self):
        return min((t[0] for t in self.timers), default=None)


class StreamSession(_Session):
    """Compute node over TCP memory servers (real multi-process runs)."""

    def __init__(self, config: GasConfig, node_index: int = 0,
                 hosts: dict | None = None, hosts_path=None):
        super().__init__(config, PagingAllocator(config))
        hosts = hosts or load_hosts(hosts_path)
        nid = compute(node_index)
        try:
            self.transport = StreamTransport(nid, hosts)
        except OSError as exc:
            raise ConnectError(str(exc)) from exc
        self.env = _StreamEnv(self.transport)
        self.node = ComputeNode(nid, config, self.env)

    def _call(self, cmd):
        out = []

        def prog():
            result = yield cmd
            out.append(result)

        self.node.run_program(prog())
        while not self.node.finished:
            for _, tag in self.env.due_timers():
                self.node.on_timer(tag)
            if self.node.finished:
                break
            deadline = self.env.next_deadline()
            timeout = None
            if deadline is not None:
                timeout = max((deadline - self.env.local_now()) / 1e9, 0.0)
            msg = self.transport.recv(timeout=timeout if timeout is not None else 1.0)
            if msg is not None:
                self.node.handle(msg)
        return out[0] if out else None

    def close(self):
        self.transport.close()


def dsm_map(config: GasConfig, backend: str = "sim", node_index: int = 0,
            cluster: SimCluster | None = None, hosts: dict | None = None,
            hosts_path=None):
    """Join the cluster as a compute node and return a session handle."""
    if backend == "sim":
        if cluster is None:
            cluster = SimCluster(config)
        return SimSession(cluster, node_index)
    if backend == "stream":
        return StreamSession(config, node_index, hosts=hosts, hosts_path=hosts_path)
    raise ValueError(f"unknown backend {backend!r}")
