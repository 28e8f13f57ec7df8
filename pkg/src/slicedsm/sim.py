"""Deterministic virtual-time cluster harness.

All nodes run in one process on a single event heap. Virtual time is
integer nanoseconds; each node sees only its own (possibly skewed,
drifting) local clock. The harness records one trace record per
delivered message and offers a serial oracle plus a trace checker for
coherence verification.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field

from .core import GasConfig, NodeId, StatusTag
from .errors import DeadlockError, OracleViolation
from .messages import Kind, Message
from .protocol import ComputeNode, MemoryServer, NodeEnv, _Access
from .transport import LatencyModel

WIRE_NAMES = {
    Kind.READ_REQ: "ReadReq",
    Kind.WRITE_REQ: "WriteReq",
    Kind.PAGE_DATA: "PageData",
    Kind.WRITE_GRANT: "WriteGrant",
    Kind.REDIRECT: "Redirect",
    Kind.INVALIDATE: "Invalidate",
    Kind.INVALIDATE_ACK: "InvalidateAck",
    Kind.COPY_REQ: "CopyReq",
    Kind.HANDOFF_REQ: "HandoffReq",
    Kind.PRIVILEGE_TRANSFER: "PrivilegeTransfer",
    Kind.TRANSFER_NOTICE: "TransferNotice",
    Kind.WRITEBACK: "Writeback",
    Kind.WRITEBACK_ACK: "WritebackAck",
    Kind.BARRIER_ENTER: "BarrierEnter",
    Kind.BARRIER_RELEASE: "BarrierRelease",
    Kind.LOCK_REQ: "LockReq",
    Kind.LOCK_GRANT: "LockGrant",
    Kind.LOCK_RELEASE: "LockRelease",
    Kind.READER_DROP: "ReaderDrop",
}
_NAME_TO_KIND = {v: k for k, v in WIRE_NAMES.items()}


@dataclass(frozen=True)
class Clock:
    """Per-node local clock: local(t) = (t + offset) * drift."""

    offset: int = 0
    drift: float = 1.0

    def local(self, t: int) -> float:
        return (t + self.offset) * self.drift

    def virtual_at_or_after(self, local_target: float, not_before: int) -> int:
        t = max(int(local_target / self.drift) - self.offset, not_before)
        while self.local(t) < local_target:
            t += 1
        return t


@dataclass
class ClockSkew:
    offsets: dict[NodeId, int] = field(default_factory=dict)
    drifts: dict[NodeId, float] = field(default_factory=dict)

    def clock_for(self, nid: NodeId) -> Clock:
        return Clock(self.offsets.get(nid, 0), self.drifts.get(nid, 1.0))

    @classmethod
    def generate(cls, seed, nodes, max_offset_ns=5_000_000, drift_range=(0.5, 1.5)):
        rnd = random.Random(seed)
        skew = cls()
        for nid in nodes:
            skew.offsets[nid] = rnd.randint(-max_offset_ns, max_offset_ns)
            skew.drifts[nid] = rnd.uniform(*drift_range)
        return skew


@dataclass
class TraceRecord:
    """One delivered message."""

    time: int  # virtual delivery time
    src: NodeId
    dst: NodeId
    kind: Kind
    page: int
    seq: int
    send_time: int = 0
    extra: int | None = None  # TransferNotice variant / BarrierEnter arity

    def line(self) -> str:
        return (
            f"{self.time}\t{self.src}\t{self.dst}\t"
            f"{WIRE_NAMES[self.kind]}\t{self.page}\t{self.seq}"
        )


def format_trace(records) -> str:
    return "".join(r.line() + "\n" for r in records)


def parse_trace(text: str, config: GasConfig, model: LatencyModel) -> list[TraceRecord]:
    """Rebuild trace records from the tab-separated log.

    Send times are reconstructed from the latency model (payload sizes are
    implied by the kind); TransferNotice variants are not recoverable from
    the text form.
    """
    payload_sizes = {
        Kind.PAGE_DATA: config.page_size,
        Kind.WRITE_GRANT: config.page_size,
        Kind.PRIVILEGE_TRANSFER: config.page_size,
        Kind.WRITEBACK: config.page_size,
        Kind.REDIRECT: 3,
        Kind.HANDOFF_REQ: 1,
        Kind.TRANSFER_NOTICE: 3,
        Kind.BARRIER_ENTER: 4,
    }
    records = []
    for line in text.splitlines():
        if not line.strip():
            continue
        t, src, dst, kind_name, page, seq = line.split("\t")
        kind = _NAME_TO_KIND[kind_name]
        deliver = int(t)
        send = deliver - model.wire_ns(payload_sizes.get(kind, 0))
        records.append(
            TraceRecord(
                deliver,
                NodeId.parse(src),
                NodeId.parse(dst),
                kind,
                int(page),
                int(seq),
                send,
            )
        )
    return records


def _node_key(nid: NodeId):
    return (0 if nid.is_server else 1, nid.index)


class _SimEnv(NodeEnv):
    def __init__(self, cluster, nid):
        self.cluster = cluster
        self.nid = nid
        self.clock = cluster.clock_for(nid)

    def send(self, dst, msg):
        self.cluster._send(self.nid, dst, msg)

    def local_now(self):
        return self.clock.local(self.cluster.now)

    def schedule_at_local(self, local_deadline, tag):
        t = self.clock.virtual_at_or_after(local_deadline, self.cluster.now)
        self.cluster._schedule_timer(t, self.nid, tag)

    def copy_ns(self, nbytes):
        return self.cluster.model.copy_ns(nbytes)


class SimCluster:
    """One simulated cluster: servers, computes, network, and clocks."""

    def __init__(self, config: GasConfig, model: LatencyModel | None = None,
                 skew: ClockSkew | None = None):
        self.config = config
        self.model = model or LatencyModel()
        self.skew = skew or ClockSkew()
        self.now = 0
        self.trace: list[TraceRecord] = []
        self._heap: list = []
        self._counter = 0
        self._last_delivery: dict[tuple[NodeId, NodeId], int] = {}
        self.servers = {
            nid: MemoryServer(nid, config, _SimEnv(self, nid))
            for nid in config.servers()
        }
        self.computes = {
            nid: ComputeNode(nid, config, _SimEnv(self, nid))
            for nid in config.computes()
        }
        self.nodes = {**self.servers, **self.computes}

    def clock_for(self, nid: NodeId) -> Clock:
        return self.skew.clock_for(nid)

    # --- event plumbing ----------------------------------------------------

    def _push(self, t, dst, src_key, seq, item):
        self._counter += 1
        heapq.heappush(
            self._heap, (t, _node_key(dst), src_key, seq, self._counter, item)
        )

    def _send(self, src: NodeId, dst: NodeId, msg: Message):
        deliver = self.now + self.model.wire_ns(len(msg.payload))
        pair = (src, dst)
        deliver = max(deliver, self._last_delivery.get(pair, 0))
        self._last_delivery[pair] = deliver
        extra = None
        if msg.kind is Kind.TRANSFER_NOTICE:
            extra = msg.variant
        elif msg.kind is Kind.BARRIER_ENTER:
            extra = msg.expected
        rec = TraceRecord(
            deliver, src, dst, msg.kind, msg.page, msg.seq, self.now, extra
        )
        self._push(deliver, dst, _node_key(src), msg.seq, ("msg", msg, rec))

    def _schedule_timer(self, t, nid, tag):
        self._push(t, nid, _node_key(nid), 0, ("timer", nid, tag))

    def step(self) -> bool:
        if not self._heap:
            return False
        t, dst_key, _, _, _, item = heapq.heappop(self._heap)
        self.now = t
        if item[0] == "msg":
            _, msg, rec = item
            self.trace.append(rec)
            self.nodes[rec.dst].handle(msg)
        else:
            _, nid, tag = item
            self.nodes[nid].on_timer(tag)
        return True

    def run_until_quiescent(self, max_events: int = 20_000_000):
        steps = 0
        while self.step():
            steps += 1
            if steps > max_events:
                raise RuntimeError("event budget exhausted; livelock suspected")

    # --- whole-cluster state ------------------------------------------------

    def final_image(self) -> dict[int, bytes]:
        """Authoritative page contents, sparse (all-zero pages omitted)."""
        image = {}
        zero = bytes(self.config.page_size)
        for srv in self.servers.values():
            for page, entry in srv.directory.items():
                if entry.status.tag is StatusTag.CURRENT:
                    data = bytes(entry.server_copy)
                else:
                    holder = self.computes[entry.status.node]
                    cp = holder.cache.get(page) or holder.writeback_wait.get(page)
                    data = bytes(cp.data)
                if data != zero:
                    image[page] = data
        return image

    def blocked_ops(self):
        out = []
        for nid, node in self.computes.items():
            if node.finished:
                continue
            pend = node.pending
            if isinstance(pend, _Access):
                desc = f"{'read' if pend.mode == 'r' else 'write'} page {pend.page}"
            elif isinstance(pend, tuple):
                desc = f"{pend[0]} {pend[1]}"
            else:
                desc = "idle"
            out.append((nid, desc))
        return out


# --- workloads --------------------------------------------------------------


@dataclass
class Workload:
    """Per-compute-node operation lists, using program command tuples."""

    ops: dict[NodeId, list[tuple]]

    def program(self, nid: NodeId, sink: list):
        def _run():
            for op in self.ops.get(nid, []):
                result = yield op
                if op[0] == "read":
                    sink.append(result)

        return _run()


def gen_workload(seed: int, profile: str, config: GasConfig,
                 sections_per_round: int = 4, rounds: int = 2) -> Workload:
    """Reproducible pseudo-random workload for a given profile.

    lock-protected: every access sits inside a critical section of the
    page's lock, so the serial oracle is bytewise exact.
    write-contended: >= 2 nodes hammer overlapping pages without locks.
    read-heavy: writes go to node-private pages, reads anywhere.
    """
    rnd = random.Random(f"{profile}:{seed}")  # str seeding is process-stable
    nodes = config.computes()
    pool = min(32, config.num_pages)
    ops: dict[NodeId, list[tuple]] = {n: [] for n in nodes}

    def rand_chunk(page):
        off = rnd.randrange(0, config.page_size - 64)
        length = rnd.randint(8, 64)
        return page * config.page_size + off, length

    if profile == "lock-protected":
        for rnd_idx in range(rounds):
            for n in nodes:
                for _ in range(sections_per_round):
                    page = rnd.randrange(pool)
                    ops[n].append(("lock", page))
                    for _ in range(rnd.randint(1, 3)):
                        addr, length = rand_chunk(page)
                        if rnd.random() < 0.6:
                            ops[n].append(("write", addr, rnd.randbytes(length)))
                        else:
                            ops[n].append(("read", addr, length))
                    ops[n].append(("unlock", page))
            for n in nodes:
                ops[n].append(("barrier", 1_000_000 + rnd_idx, len(nodes)))
    elif profile == "write-contended":
        hot = [rnd.randrange(pool) for _ in range(max(2, pool // 8))]
        for n in nodes:
            for _ in range(rounds * sections_per_round):
                addr, length = rand_chunk(rnd.choice(hot))
                if rnd.random() < 0.8:
                    ops[n].append(("write", addr, rnd.randbytes(length)))
                else:
                    ops[n].append(("read", addr, length))
    elif profile == "read-heavy":
        span = config.num_pages // max(len(nodes), 1)
        for i, n in enumerate(nodes):
            private = range(i * span, (i + 1) * span) if span else range(0)
            for _ in range(rounds * sections_per_round):
                if private and rnd.random() < 0.3:
                    addr, length = rand_chunk(rnd.choice(list(private)[:8]))
                    ops[n].append(("write", addr, rnd.randbytes(length)))
                else:
                    addr, length = rand_chunk(rnd.randrange(pool))
                    ops[n].append(("read", addr, length))
    else:
        raise ValueError(f"unknown profile {profile!r}")
    return Workload(ops)


# --- running ---------------------------------------------------------------


@dataclass
class DeadlockReport:
    blocked: list[tuple[NodeId, str]]

    def __str__(self):
        lines = ["deadlock: no runnable events with unfinished operations"]
        lines += [f"  {nid}: blocked on {desc}" for nid, desc in self.blocked]
        return "\n".join(lines)


@dataclass
class SimResult:
    trace: list[TraceRecord]
    image: dict[int, bytes]
    read_results: dict[NodeId, list[bytes]]
    cluster: SimCluster

    def trace_text(self) -> str:
        return format_trace(self.trace)


def run(config: GasConfig, workload: Workload, skew: ClockSkew | None = None,
        model: LatencyModel | None = None) -> SimResult:
    """Run a workload to completion; deterministic in all arguments."""
    cluster = SimCluster(config, model=model, skew=skew)
    sinks = {nid: [] for nid in cluster.computes}
    for nid, node in cluster.computes.items():
        node.run_program(workload.program(nid, sinks[nid]))
    cluster.run_until_quiescent()
    blocked = cluster.blocked_ops()
    if blocked:
        raise DeadlockError(DeadlockReport(blocked))
    return SimResult(cluster.trace, cluster.final_image(), sinks, cluster)


# --- serial oracle ---------------------------------------------------------


@dataclass
class OracleResult:
    image: dict[int, bytes]
    read_expectations: dict[NodeId, list[bytes | None]]


def serial_oracle(config: GasConfig, workload: Workload,
                  trace: list[TraceRecord]) -> OracleResult:
    """Replay the workload in the linearization order induced by the trace.

    Lock critical sections are ordered by lock-grant delivery order;
    barrier-separated phases are ordered by the releasing epoch; remaining
    ops keep per-node program order. For data-race-free workloads the
    resulting image is exact. Reads outside critical sections get no
    expectation (None).
    """
    grant_order: dict[tuple[NodeId, int], list[int]] = {}
    release_order: dict[NodeId, list[int]] = {}
    for idx, rec in enumerate(trace):
        if rec.kind is Kind.LOCK_GRANT:
            grant_order.setdefault((rec.dst, rec.page), []).append(idx)
        elif rec.kind is Kind.BARRIER_RELEASE:
            release_order.setdefault(rec.dst, []).append(idx)

    keyed = []  # (key, node, op_index, op)
    for nid, ops in workload.ops.items():
        section_counts: dict[int, int] = {}
        open_locks: list[tuple[int, int, int]] = []  # (lock, grant_idx, intra ctr)
        phase_key = -1
        barriers_passed = 0
        intra = 0
        for op_idx, op in enumerate(ops):
            name = op[0]
            if name == "lock":
                lock_id = op[1]
                n = section_counts.get(lock_id, 0)
                section_counts[lock_id] = n + 1
                grants = grant_order.get((nid, lock_id), [])
                if n >= len(grants):
                    raise OracleViolation(
                        f"{nid}: no grant in trace for section {n} of lock {lock_id}"
                    )
                open_locks.append((lock_id, grants[n], 0))
                continue
            if name == "unlock":
                if not open_locks or open_locks[-1][0] != op[1]:
                    raise OracleViolation(f"{nid}: unlock {op[1]} not innermost")
                open_locks.pop()
                continue
            if name == "barrier":
                barriers_passed += 1
                releases = release_order.get(nid, [])
                phase_key = (
                    releases[barriers_passed - 1]
                    if barriers_passed <= len(releases)
                    else len(trace)
                )
                continue
            if name == "delay":
                continue
            if open_locks:
                _, grant_idx, _ = open_locks[-1]
                key = (grant_idx, intra, 0)
                in_section = True
            else:
                key = (phase_key, intra, nid.index + 1)
                in_section = False
            intra += 1
            keyed.append((key, nid, op_idx, op, in_section))

    keyed.sort(key=lambda item: item[0])

    image: dict[int, bytearray] = {}
    expectations: dict[NodeId, list[bytes | None]] = {
        nid: [] for nid in workload.ops
    }

    def read_bytes(addr, length):
        out = bytearray(length)
        for i in range(length):
            a = addr + i
            page, off = divmod(a, config.page_size)
            if page in image:
                out[i] = image[page][off]
        return bytes(out)

    def write_bytes(addr, data):
        for i, b in enumerate(data):
            page, off = divmod(addr + i, config.page_size)
            buf = image.get(page)
            if buf is None:
                buf = image[page] = bytearray(config.page_size)
            buf[off] = b

    for _, nid, _, op, in_section in keyed:
        if op[0] == "write":
            write_bytes(op[1], op[2])
        elif op[0] == "read":
            expectations[nid].append(
                read_bytes(op[1], op[2]) if in_section else None
            )

    zero = bytes(config.page_size)
    final = {p: bytes(b) for p, b in image.items() if bytes(b) != zero}
    return OracleResult(final, expectations)


# --- trace checking --------------------------------------------------------


@dataclass
class CheckReport:
    violations: list[tuple[str, int]]

    @property
    def ok(self) -> bool:
        return not self.violations

    def machine_lines(self) -> list[str]:
        return [f"VIOLATION {kind} {idx}" for kind, idx in self.violations]

    def __str__(self):
        if self.ok:
            return "trace check: ok (0 violations)"
        return "trace check: FAILED\n" + "\n".join(self.machine_lines())


def check_trace(trace: list[TraceRecord], config: GasConfig,
                skew: ClockSkew | None = None) -> CheckReport:
    """Verify protocol and sync invariants over a delivered-message trace."""
    skew = skew or ClockSkew()
    violations: list[tuple[str, int]] = []

    events = []  # (time, phase, idx) phase 0 = deliver, 1 = send; sorted
    for idx, rec in enumerate(trace):
        events.append((rec.send_time, 1, idx))
        events.append((rec.time, 0, idx))
    events.sort(key=lambda e: (e[0], e[1], e[2]))

    # a transfer-variant notice always rides with a PrivilegeTransfer sent
    # by the same node at the same instant; recognizing the pair by key
    # keeps the check independent of the (text-lossy) notice variant
    transfer_companions = {
        (rec.page, rec.src, rec.send_time)
        for rec in trace
        if rec.kind is Kind.PRIVILEGE_TRANSFER
    }

    writer: dict[int, NodeId | None] = {}
    grant_time: dict[int, int] = {}
    unacked_invals: dict[int, dict[NodeId, None]] = {}
    pending_reqs: dict[tuple[int, NodeId], set] = {}
    fifo: dict[int, list[NodeId]] = {}
    fifo_current: dict[int, NodeId | None] = {}
    lock_holder: dict[int, NodeId | None] = {}
    barrier_arrivals: dict[int, int] = {}
    barrier_released: dict[int, int] = {}
    barrier_arity: dict[int, int] = {}

    for t, phase, idx in events:
        rec = trace[idx]
        k = rec.kind
        page = rec.page
        if phase == 0:  # delivery
            if k in (Kind.WRITE_GRANT, Kind.PRIVILEGE_TRANSFER):
                if writer.get(page) is not None:
                    violations.append(("single-writer", idx))
                writer[page] = rec.dst
                grant_time[page] = rec.time
                q = fifo.get(page, [])
                if q and q[0] == rec.dst:
                    q.pop(0)
                elif rec.dst != fifo_current.get(page):
                    violations.append(("fifo", idx))
                fifo_current[page] = rec.dst
            elif k is Kind.WRITE_REQ:
                q = fifo.setdefault(page, [])
                if rec.src != fifo_current.get(page) and rec.src not in q:
                    q.append(rec.src)
            elif k is Kind.INVALIDATE_ACK:
                unacked_invals.get(page, {}).pop(rec.src, None)
            elif k in (Kind.HANDOFF_REQ, Kind.COPY_REQ):
                pending_reqs.setdefault((page, rec.dst), set()).add(k)
            elif k is Kind.WRITEBACK:
                if writer.get(page) == rec.src:
                    writer[page] = None
                if fifo_current.get(page) == rec.src:
                    fifo_current[page] = None
            elif k is Kind.LOCK_GRANT:
                if lock_holder.get(page) is not None:
                    violations.append(("mutex", idx))
                lock_holder[page] = rec.dst
            elif k is Kind.LOCK_RELEASE:
                if lock_holder.get(page) != rec.src:
                    violations.append(("mutex", idx))
                lock_holder[page] = None
            elif k is Kind.BARRIER_ENTER:
                barrier_arrivals[page] = barrier_arrivals.get(page, 0) + 1
                if rec.extra:
                    barrier_arity[page] = rec.extra
        else:  # send
            if k is Kind.INVALIDATE:
                unacked_invals.setdefault(page, {})[rec.dst] = None
            elif k is Kind.WRITE_GRANT:
                if unacked_invals.get(page):
                    violations.append(("grant-safety", idx))
            elif k is Kind.PRIVILEGE_TRANSFER or (
                k is Kind.TRANSFER_NOTICE
                and writer.get(page) == rec.src
                and (page, rec.src, rec.send_time) not in transfer_companions
            ):
                holder = rec.src
                wanted = Kind.HANDOFF_REQ if k is Kind.PRIVILEGE_TRANSFER else Kind.COPY_REQ
                reqs = pending_reqs.get((page, holder), set())
                if wanted not in reqs:
                    violations.append(("spontaneous-relinquish", idx))
                else:
                    reqs.discard(wanted)
                if writer.get(page) == holder:
                    clock = skew.clock_for(holder)
                    installed = clock.local(grant_time[page])
                    if clock.local(rec.send_time) < installed + config.slice_len:
                        violations.append(("slice", idx))
                    writer[page] = None
                    fifo_current[page] = None
            elif k is Kind.BARRIER_RELEASE:
                # the text trace form drops the arity; all-computes is the
                # only arity the built-in workloads use
                arity = barrier_arity.get(page) or config.num_computes
                if arity <= 0:
                    violations.append(("barrier", idx))
                else:
                    allowed = (barrier_arrivals.get(page, 0) // arity) * arity
                    if barrier_released.get(page, 0) >= allowed:
                        violations.append(("barrier", idx))
                    barrier_released[page] = barrier_released.get(page, 0) + 1

    return CheckReport(violations)
