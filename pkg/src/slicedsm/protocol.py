"""Memory-server and compute-node state machines for the time-slice
write-invalidate consistency protocol.

Both node types are single sequential event processors: one message or
timer is handled to completion before the next, and nodes interact only
through messages.  The environment object supplies message delivery,
local-clock reads, and local-deadline timers, so the same state machines
run under the deterministic simulator and the TCP stream backend.

A write request for a page that other nodes hold read copies of triggers
an invalidation round; the write grant is withheld until every
invalidation is acknowledged.  A write request for a write-locked page
queues at the owning server; only the queue head is redirected to the
current writer, which relinquishes no earlier than one write time slice
(measured on its own clock) after the grant was installed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .core import (
    CURRENT,
    GasConfig,
    NodeId,
    PageDirectoryEntry,
    StatusTag,
    current_on_compute,
    write_locked,
)
from .errors import AddressError, LockError, ProtocolError
from .messages import (
    DOWNGRADE,
    Kind,
    Message,
    TRANSFER,
    handoff_payload,
    redirect_payload,
    transfer_notice_payload,
)
from .sync import SyncManager

log = logging.getLogger(__name__)


class NodeEnv:
    """What a node needs from its surroundings.

    The simulator and the stream backend each provide one of these.
    """

    def send(self, dst: NodeId, msg: Message):
        raise NotImplementedError

    def local_now(self) -> float:
        raise NotImplementedError

    def schedule_at_local(self, local_deadline: float, tag):
        """Arrange an on_timer(tag) callback once the local clock >= deadline."""
        raise NotImplementedError

    def copy_ns(self, nbytes: int) -> int:
        """Modeled local-memory cost of copying nbytes (0 on real backends)."""
        return 0


class ProtoNode:
    def __init__(self, nid: NodeId, config: GasConfig, env: NodeEnv):
        self.nid = nid
        self.config = config
        self.env = env
        self._seqs: dict[NodeId, int] = {}

    def send(self, dst: NodeId, kind: Kind, page: int, payload: bytes = b""):
        seq = self._seqs.get(dst, 0) + 1
        self._seqs[dst] = seq
        self.env.send(dst, Message(kind, page, self.nid, seq, payload))


@dataclass
class _InvalRound:
    """One in-flight invalidation fan-out for a page."""

    writer: NodeId
    outstanding: dict[NodeId, None]
    grants: bool  # True: grant WriteGrant when drained; False: handoff path


class MemoryServer(ProtoNode):
    """Owner-side page directory plus barrier/mutex managers."""

    def __init__(self, nid, config, env):
        super().__init__(nid, config, env)
        self.directory: dict[int, PageDirectoryEntry] = {}
        self.pending_inval: dict[int, _InvalRound] = {}
        self.handoff_wait: dict[int, NodeId] = {}  # page -> writer awaiting notice
        self.deferred_reads: dict[int, list[NodeId]] = {}
        self.sync = SyncManager(self)

    def entry(self, page: int) -> PageDirectoryEntry:
        e = self.directory.get(page)
        if e is None:
            e = PageDirectoryEntry(page, bytearray(self.config.page_size))
            self.directory[page] = e
        return e

    # --- dispatch ---------------------------------------------------------

    def handle(self, msg: Message):
        if not msg.src.is_compute:
            raise ProtocolError(f"{self.nid}: request from non-compute node {msg.src}")
        kind = msg.kind
        if kind is Kind.READ_REQ:
            self._handle_read(msg.page, msg.src)
        elif kind is Kind.WRITE_REQ:
            self._handle_write(msg.page, msg.src)
        elif kind is Kind.INVALIDATE_ACK:
            self._handle_inval_ack(msg.page, msg.src)
        elif kind is Kind.TRANSFER_NOTICE:
            self._handle_transfer_notice(msg)
        elif kind is Kind.WRITEBACK:
            self._handle_writeback(msg.page, msg.payload, msg.src)
        elif kind is Kind.READER_DROP:
            self._handle_reader_drop(msg.page, msg.src)
        elif kind in (Kind.BARRIER_ENTER, Kind.LOCK_REQ, Kind.LOCK_RELEASE):
            self.sync.handle(msg)
        else:
            raise ProtocolError(f"{self.nid}: unexpected {kind.name} from {msg.src}")

    # --- reads ------------------------------------------------------------

    def _handle_read(self, page: int, req: NodeId):
        if page in self.pending_inval or page in self.handoff_wait:
            # page is mid-transition; answer once the round settles
            self.deferred_reads.setdefault(page, []).append(req)
            return
        e = self.entry(page)
        tag = e.status.tag
        if tag is StatusTag.CURRENT:
            e.readers[req] = None
            self.send(req, Kind.PAGE_DATA, page, bytes(e.server_copy))
        elif tag is StatusTag.CURRENT_ON_COMPUTE:
            holder = e.status.node
            if holder == req:
                raise ProtocolError(f"{self.nid}: holder {req} re-reading page {page}")
            e.readers[req] = None
            self.send(req, Kind.REDIRECT, page, redirect_payload(holder))
        else:  # write locked: the read demands the current copy from the writer
            writer = e.status.node
            if writer == req:
                return  # writer already has the page; stale request
            e.readers[req] = None
            self.send(req, Kind.REDIRECT, page, redirect_payload(writer, True))

    # --- writes -----------------------------------------------------------

    def _handle_write(self, page: int, req: NodeId):
        e = self.entry(page)
        round_ = self.pending_inval.get(page)
        if round_ is not None and round_.grants:
            if req == round_.writer:
                return  # duplicate
            self._enqueue_writer(e, req, redirect=False)
            return
        if page in self.handoff_wait:
            if req == self.handoff_wait[page]:
                return  # duplicate
            self._enqueue_writer(e, req, redirect=False)
            return
        if round_ is not None and e.status.tag is StatusTag.CURRENT:
            # a handoff's invalidations are still draining but the holder
            # already wrote back; grant once the last ack arrives
            round_.writer = req
            round_.grants = True
            return

        tag = e.status.tag
        if tag is StatusTag.CURRENT:
            targets = [r for r in e.readers if r != req]
            for r in targets:
                del e.readers[r]
                self.send(r, Kind.INVALIDATE, page)
            if targets:
                self.pending_inval[page] = _InvalRound(
                    req, dict.fromkeys(targets), grants=True
                )
            else:
                self._grant(e, req)
        elif tag is StatusTag.CURRENT_ON_COMPUTE:
            holder = e.status.node
            if e.write_queue:
                # earlier writers are still ahead; strict FIFO
                self._enqueue_writer(e, req, redirect=False)
            elif holder == req:
                # in-place upgrade: holder already has the latest bytes
                targets = [r for r in e.readers if r != req]
                for r in targets:
                    del e.readers[r]
                    self.send(r, Kind.INVALIDATE, page)
                if targets:
                    self.pending_inval[page] = _InvalRound(
                        req, dict.fromkeys(targets), grants=True
                    )
                else:
                    self._grant(e, req)
            else:
                self._start_handoff(e, req)
        else:  # write locked
            writer = e.status.node
            if writer == req:
                return  # duplicate from current writer
            self._enqueue_writer(e, req, redirect=not e.write_queue)

    def _start_handoff(self, e: PageDirectoryEntry, req: NodeId):
        """Route a write request to the CurrentOnCompute holder."""
        holder = e.status.node
        targets = [r for r in e.readers if r not in (holder, req)]
        for r in targets:
            del e.readers[r]
            self.send(r, Kind.INVALIDATE, e.page)
        if targets:
            self.pending_inval[e.page] = _InvalRound(
                req, dict.fromkeys(targets), grants=False
            )
        self.handoff_wait[e.page] = req
        self.send(req, Kind.REDIRECT, e.page, redirect_payload(holder))

    def _enqueue_writer(self, e: PageDirectoryEntry, req: NodeId, redirect: bool):
        if req in e.write_queue:
            # NACK retry from a queued writer: re-point the head at the
            # current writer (a redirect may have raced ahead of the grant)
            if e.write_queue[0] == req and e.status.tag is StatusTag.WRITE_LOCKED:
                self.send(
                    req, Kind.REDIRECT, e.page,
                    redirect_payload(e.status.node, True),
                )
            return
        if redirect and e.status.tag is StatusTag.WRITE_LOCKED:
            self.send(
                req, Kind.REDIRECT, e.page, redirect_payload(e.status.node, True)
            )
        e.write_queue.append(req)

    def _grant(self, e: PageDirectoryEntry, writer: NodeId):
        e.readers.pop(writer, None)
        if writer in e.write_queue:
            e.write_queue.remove(writer)
        e.status = write_locked(writer)
        self.send(writer, Kind.WRITE_GRANT, e.page, bytes(e.server_copy))
        self._after_lock_transition(e)

    def _after_lock_transition(self, e: PageDirectoryEntry):
        """Route the queue head onward after a status change, flush reads."""
        e.check_invariants()
        if e.write_queue and e.status.tag is StatusTag.WRITE_LOCKED:
            head = e.write_queue[0]
            self.send(
                head, Kind.REDIRECT, e.page, redirect_payload(e.status.node, True)
            )
        elif (
            e.write_queue
            and e.status.tag is StatusTag.CURRENT_ON_COMPUTE
            and e.page not in self.handoff_wait
        ):
            self._start_handoff(e, e.write_queue.popleft())
        self._flush_deferred_reads(e.page)

    def _flush_deferred_reads(self, page: int):
        if page in self.pending_inval or page in self.handoff_wait:
            return
        for req in self.deferred_reads.pop(page, []):
            self._handle_read(page, req)

    # --- invalidation acks --------------------------------------------------

    def _handle_inval_ack(self, page: int, acker: NodeId):
        round_ = self.pending_inval.get(page)
        if round_ is None or acker not in round_.outstanding:
            raise ProtocolError(f"{self.nid}: unexpected InvalidateAck from {acker}")
        del round_.outstanding[acker]
        if round_.outstanding:
            return
        del self.pending_inval[page]
        if round_.grants:
            self._grant(self.entry(page), round_.writer)
        else:
            self._flush_deferred_reads(page)

    # --- privilege movement -------------------------------------------------

    def _handle_transfer_notice(self, msg: Message):
        page, src = msg.page, msg.src
        e = self.entry(page)
        if msg.variant == DOWNGRADE:
            if e.status != write_locked(src):
                raise ProtocolError(f"{self.nid}: downgrade from non-writer {src}")
            e.status = current_on_compute(src)
            e.readers[src] = None
            self._after_lock_transition(e)
            return
        new_writer = msg.new_writer
        if e.status == write_locked(src):
            if not e.write_queue or e.write_queue[0] != new_writer:
                raise ProtocolError(
                    f"{self.nid}: transfer to {new_writer} not at queue head"
                )
            e.write_queue.popleft()
        elif e.status == current_on_compute(src):
            if self.handoff_wait.get(page) != new_writer:
                raise ProtocolError(
                    f"{self.nid}: unexpected handoff to {new_writer} on page {page}"
                )
            del self.handoff_wait[page]
            e.readers.pop(src, None)  # old holder retains nothing
        else:
            raise ProtocolError(f"{self.nid}: transfer notice from non-writer {src}")
        e.readers.pop(new_writer, None)
        e.status = write_locked(new_writer)
        self._after_lock_transition(e)

    def _handle_writeback(self, page: int, data: bytes, src: NodeId):
        e = self.entry(page)
        if e.status == current_on_compute(src):
            e.readers.pop(src, None)
        elif e.status == write_locked(src):
            pass
        else:
            raise ProtocolError(f"{self.nid}: writeback from stale holder {src}")
        e.server_copy[:] = data
        e.status = CURRENT
        self.send(src, Kind.WRITEBACK_ACK, page)
        waiting = self.handoff_wait.pop(page, None)  # holder vanished mid-handoff
        self._flush_deferred_reads(page)
        if waiting is not None:
            self._handle_write(page, waiting)
        elif e.write_queue:
            head = e.write_queue.popleft()
            self._handle_write(page, head)

    def _handle_reader_drop(self, page: int, src: NodeId):
        e = self.entry(page)
        if e.status.node == src and e.status.tag is StatusTag.CURRENT_ON_COMPUTE:
            raise ProtocolError(f"{self.nid}: holder {src} dropped without writeback")
        e.readers.pop(src, None)


@dataclass
class CachedPage:
    """Compute-node copy of one page."""

    page: int
    data: bytearray
    privilege: str  # 'R' or 'W'
    dirty: bool = False
    install_local: float = 0.0
    slice_deadline: float = 0.0
    pending_handoff: NodeId | None = None
    pending_copy_reqs: list[NodeId] = field(default_factory=list)
    timer_armed: bool = False

    @property
    def pinned(self) -> bool:
        return self.pending_handoff is not None or bool(self.pending_copy_reqs)


@dataclass
class _Access:
    """State of the one outstanding application access on a compute node."""

    mode: str  # 'r' or 'w'
    addr: int
    buf: bytearray  # read destination or write source
    chunks: list[tuple[int, int, int, int]]  # (page, page_off, buf_off, len)
    idx: int = 0
    stage: str = "start"  # start | server | holder | copy
    poisoned: bool = False
    copy_token: object = None

    @property
    def page(self) -> int:
        return self.chunks[self.idx][0]


class _DelayToken:
    __slots__ = ()


class ComputeNode(ProtoNode):
    """Cache, access state machine, and writer-side slice logic."""

    def __init__(self, nid, config, env):
        super().__init__(nid, config, env)
        self.cache: dict[int, CachedPage] = {}  # insertion order == LRU order
        self.writeback_wait: dict[int, CachedPage] = {}
        self.capacity = config.cache_frames
        self.program = None
        self.finished = True
        self.pending = None  # _Access or ('lock'|'barrier'|'delay', id)
        self.stalled = False
        self.held_locks: set[int] = set()
        self.results: list = []
        self.protocol_errors: list[str] = []

    # --- program driving ----------------------------------------------------

    def run_program(self, program):
        """Attach a generator program and start executing it."""
        self.program = program
        self.finished = False
        self._advance(None)

    def _advance(self, value):
        try:
            cmd = self.program.send(value)
        except StopIteration:
            self.finished = True
            self.program = None
            return
        self._begin(cmd)

    def _begin(self, cmd):
        op = cmd[0]
        if op == "read":
            _, addr, length = cmd
            self.pending = self._make_access("r", addr, bytearray(length))
            self._step_access()
        elif op == "write":
            _, addr, data = cmd
            self.pending = self._make_access("w", addr, bytearray(data))
            self._step_access()
        elif op == "lock":
            lock_id = cmd[1]
            if lock_id in self.held_locks:
                raise LockError(f"{self.nid}: reentrant acquire of lock {lock_id}")
            self.pending = ("lock", lock_id)
            self.send(self.config.manager_of(lock_id), Kind.LOCK_REQ, lock_id)
        elif op == "unlock":
            lock_id = cmd[1]
            if lock_id not in self.held_locks:
                raise LockError(f"{self.nid}: release of lock {lock_id} not held")
            self.held_locks.discard(lock_id)
            self.send(self.config.manager_of(lock_id), Kind.LOCK_RELEASE, lock_id)
            self._advance(True)
        elif op == "barrier":
            _, barrier_id, expected = cmd
            self.pending = ("barrier", barrier_id)
            from .messages import barrier_enter_payload

            self.send(
                self.config.manager_of(barrier_id),
                Kind.BARRIER_ENTER,
                barrier_id,
                barrier_enter_payload(expected),
            )
        elif op == "delay":
            token = _DelayToken()
            self.pending = ("delay", token)
            self.env.schedule_at_local(self.env.local_now() + cmd[1], token)
        else:
            raise ValueError(f"unknown program command {op!r}")

    def _make_access(self, mode, addr, buf) -> _Access:
        length = len(buf)
        if addr < 0 or addr + length > self.config.gas_size:
            raise AddressError(f"range [{addr}, {addr + length}) outside GAS")
        chunks = []
        off = 0
        while off < length:
            page = (addr + off) // self.config.page_size
            page_off = (addr + off) % self.config.page_size
            clen = min(self.config.page_size - page_off, length - off)
            chunks.append((page, page_off, off, clen))
            off += clen
        return _Access(mode, addr, buf, chunks)

    # --- access state machine ------------------------------------------------

    def _step_access(self):
        acc = self.pending
        if not isinstance(acc, _Access):
            return
        if acc.idx >= len(acc.chunks):
            self._finish_access(acc)
            return
        page, page_off, buf_off, clen = acc.chunks[acc.idx]
        cp = self.cache.get(page)
        if cp is not None and (cp.privilege == "W" or acc.mode == "r"):
            self._touch(page)
            if acc.mode == "r":
                acc.buf[buf_off : buf_off + clen] = cp.data[page_off : page_off + clen]
            else:
                cp.data[page_off : page_off + clen] = acc.buf[buf_off : buf_off + clen]
                cp.dirty = True
            self._charge_copy(acc, clen)
            return
        # miss or privilege upgrade
        if cp is None and not self._reserve_frame(page):
            self.stalled = True  # all frames pinned; retried after next event
            return
        acc.stage = "server"
        kind = Kind.READ_REQ if acc.mode == "r" else Kind.WRITE_REQ
        self.send(self.config.owner_of(page), kind, page)

    def _charge_copy(self, acc: _Access, nbytes: int):
        acc.stage = "copy"
        delay = self.env.copy_ns(nbytes)
        token = _DelayToken()
        acc.copy_token = token
        self.env.schedule_at_local(self.env.local_now() + delay, token)

    def _finish_access(self, acc: _Access):
        self.pending = None
        self._advance(bytes(acc.buf) if acc.mode == "r" else True)

    def _touch(self, page: int):
        cp = self.cache.pop(page)
        self.cache[page] = cp

    def _frames_used(self) -> int:
        return len(self.cache) + len(self.writeback_wait)

    def _reserve_frame(self, for_page: int) -> bool:
        """Make room for one page, evicting LRU victims as needed."""
        while self._frames_used() >= self.capacity:
            victim = None
            for page, cp in self.cache.items():
                if page == for_page or cp.pinned:
                    continue
                victim = cp
                break
            if victim is None:
                return False
            del self.cache[victim.page]
            if victim.dirty:
                self.writeback_wait[victim.page] = victim
                self.send(
                    self.config.owner_of(victim.page),
                    Kind.WRITEBACK,
                    victim.page,
                    bytes(victim.data),
                )
            else:
                self.send(self.config.owner_of(victim.page), Kind.READER_DROP, victim.page)
        return True

    # --- message handling ------------------------------------------------------

    def handle(self, msg: Message):
        kind = msg.kind
        if kind is Kind.PAGE_DATA:
            self._on_page_data(msg)
        elif kind in (Kind.WRITE_GRANT, Kind.PRIVILEGE_TRANSFER):
            self._on_write_install(msg)
        elif kind is Kind.REDIRECT:
            self._on_redirect(msg)
        elif kind is Kind.INVALIDATE:
            self._on_invalidate(msg)
        elif kind is Kind.COPY_REQ:
            self._on_copy_req(msg)
        elif kind is Kind.HANDOFF_REQ:
            self._on_handoff_req(msg)
        elif kind is Kind.WRITEBACK_ACK:
            self.writeback_wait.pop(msg.page, None)
        elif kind is Kind.LOCK_GRANT:
            if self.pending == ("lock", msg.page):
                self.held_locks.add(msg.page)
                self.pending = None
                self._advance(True)
        elif kind is Kind.BARRIER_RELEASE:
            if self.pending == ("barrier", msg.page):
                self.pending = None
                self._advance(True)
        else:
            self._note_error(f"unexpected {kind.name} from {msg.src}")
        self._retry_if_stalled()

    def on_timer(self, tag):
        if isinstance(tag, _DelayToken):
            acc = self.pending
            if isinstance(acc, _Access) and getattr(acc, "copy_token", None) is tag:
                acc.idx += 1
                acc.stage = "start"
                self._step_access()
            elif (
                isinstance(self.pending, tuple)
                and self.pending[0] == "delay"
                and self.pending[1] is tag
            ):
                self.pending = None
                self._advance(True)
        else:  # slice deadline for a page
            self._on_slice_deadline(tag)
        self._retry_if_stalled()

    def _retry_if_stalled(self):
        if self.stalled:
            self.stalled = False
            self._step_access()

    def _expecting(self, page: int, stages=("server", "holder")) -> bool:
        acc = self.pending
        return (
            isinstance(acc, _Access)
            and acc.idx < len(acc.chunks)
            and acc.page == page
            and acc.stage in stages
        )

    def _restart_from_server(self, acc: _Access):
        acc.poisoned = False
        acc.stage = "server"
        kind = Kind.READ_REQ if acc.mode == "r" else Kind.WRITE_REQ
        self.send(self.config.owner_of(acc.page), kind, acc.page)

    # install paths

    def _on_page_data(self, msg: Message):
        if not self._expecting(msg.page):
            return  # stale reply
        acc = self.pending
        if acc.mode != "r":
            return
        if acc.poisoned:
            # copy raced with an invalidation round; refetch from the server
            self._restart_from_server(acc)
            return
        cp = CachedPage(msg.page, bytearray(msg.payload), "R")
        self.cache[msg.page] = cp
        page, page_off, buf_off, clen = acc.chunks[acc.idx]
        acc.buf[buf_off : buf_off + clen] = cp.data[page_off : page_off + clen]
        self._charge_copy(acc, clen)

    def _on_write_install(self, msg: Message):
        if not self._expecting(msg.page):
            return
        acc = self.pending
        if acc.mode != "w":
            return
        cp = self.cache.get(msg.page)
        if cp is not None and cp.dirty:
            pass  # our copy is at least as new; keep local bytes
        elif cp is not None:
            cp.data[:] = msg.payload
        else:
            cp = CachedPage(msg.page, bytearray(msg.payload), "W")
            self.cache[msg.page] = cp
        cp.privilege = "W"
        cp.install_local = self.env.local_now()
        cp.slice_deadline = cp.install_local + self.config.slice_len
        if cp.pending_handoff is not None or cp.pending_copy_reqs:
            # requests that overtook this grant wait out our slice
            self._arm_slice_timer(cp)
        self._touch(msg.page)
        page, page_off, buf_off, clen = acc.chunks[acc.idx]
        cp.data[page_off : page_off + clen] = acc.buf[buf_off : buf_off + clen]
        cp.dirty = True
        self._charge_copy(acc, clen)

    def _on_redirect(self, msg: Message):
        if not self._expecting(msg.page):
            return
        acc = self.pending
        target = msg.target
        if acc.poisoned or target.is_server:
            # NACK (or stale copy): retry at the owning server
            self._restart_from_server(acc)
            return
        acc.stage = "holder"
        if acc.mode == "r":
            self.send(target, Kind.COPY_REQ, msg.page)
        else:
            self.send(
                target,
                Kind.HANDOFF_REQ,
                msg.page,
                handoff_payload(msg.holder_is_writer),
            )

    # coherence traffic

    def _on_invalidate(self, msg: Message):
        page = msg.page
        cp = self.cache.get(page)
        if cp is None:
            if self._expecting(page) and self.pending.mode == "r":
                self.pending.poisoned = True
            self.send(msg.src, Kind.INVALIDATE_ACK, page)
            return
        if cp.privilege == "W" or cp.dirty:
            self._note_error(f"invalidate for privileged page {page} (directory bug)")
            return
        del self.cache[page]
        self.send(msg.src, Kind.INVALIDATE_ACK, page)

    def _on_copy_req(self, msg: Message):
        page, req = msg.page, msg.src
        cp = self.cache.get(page)
        if cp is None:
            self._nack(req, page)
            return
        if cp.privilege == "W":
            if self.env.local_now() >= cp.slice_deadline:
                self._downgrade_and_serve(cp, [req])
            else:
                cp.pending_copy_reqs.append(req)
                self._arm_slice_timer(cp)
        elif self._expecting(page) and self.pending.mode == "w":
            # our write grant is still in flight; hold the request until
            # the grant installs and our slice runs
            cp.pending_copy_reqs.append(req)
        else:
            # holder (or current reader): the copy is servable as-is
            self.send(req, Kind.PAGE_DATA, page, bytes(cp.data))

    def _on_handoff_req(self, msg: Message):
        page, req = msg.page, msg.src
        cp = self.cache.get(page)
        if cp is None:
            self._nack(req, page)
            return
        if cp.privilege == "W":
            if self.env.local_now() >= cp.slice_deadline:
                self._transfer(cp, req)
            else:
                if cp.pending_handoff is not None and cp.pending_handoff != req:
                    self._note_error(f"second handoff request for page {page}")
                    self._nack(req, page)
                    return
                cp.pending_handoff = req
                self._arm_slice_timer(cp)
        elif (
            msg.holder_is_writer
            and self._expecting(page)
            and self.pending.mode == "w"
        ):
            # the server named us as the writer, so our grant is still in
            # flight and this request outran it; hold it until it lands
            cp.pending_handoff = req
        else:
            # CurrentOnCompute holder: no slice protection on a read copy
            self._transfer(cp, req)

    def _on_slice_deadline(self, page: int):
        cp = self.cache.get(page)
        if cp is None:
            return
        cp.timer_armed = False
        if cp.privilege != "W" or self.env.local_now() < cp.slice_deadline:
            return
        if cp.pending_handoff is not None:
            self._transfer(cp, cp.pending_handoff)
        elif cp.pending_copy_reqs:
            self._downgrade_and_serve(cp, list(cp.pending_copy_reqs))
        # nothing pending: privilege retained indefinitely

    def _arm_slice_timer(self, cp: CachedPage):
        if not cp.timer_armed:
            cp.timer_armed = True
            self.env.schedule_at_local(cp.slice_deadline, cp.page)

    def _transfer(self, cp: CachedPage, req: NodeId):
        page = cp.page
        self.send(req, Kind.PRIVILEGE_TRANSFER, page, bytes(cp.data))
        self.send(
            self.config.owner_of(page),
            Kind.TRANSFER_NOTICE,
            page,
            transfer_notice_payload(req, TRANSFER),
        )
        del self.cache[page]  # old writer retains nothing
        for waiter in cp.pending_copy_reqs:
            self._nack(waiter, page)
        cp.pending_copy_reqs = []
        cp.pending_handoff = None

    def _downgrade_and_serve(self, cp: CachedPage, requesters: list[NodeId]):
        page = cp.page
        cp.privilege = "R"
        cp.dirty = True
        cp.pending_copy_reqs = []
        self.send(
            self.config.owner_of(page),
            Kind.TRANSFER_NOTICE,
            page,
            transfer_notice_payload(self.nid, DOWNGRADE),
        )
        for req in requesters:
            self.send(req, Kind.PAGE_DATA, page, bytes(cp.data))

    def _nack(self, req: NodeId, page: int):
        self.send(
            req, Kind.REDIRECT, page, redirect_payload(self.config.owner_of(page))
        )

    def _note_error(self, text: str):
        log.error("%s: %s", self.nid, text)
        self.protocol_errors.append(text)
