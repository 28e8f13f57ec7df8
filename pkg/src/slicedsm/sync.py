"""Barrier and mutex managers, hosted on memory-server nodes.

A sync identifier is mapped to its managing server by `GasConfig.manager_of`.
Locks are granted in strict FIFO request order; barriers are reusable, one
epoch after another.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .core import NodeId
from .errors import LockError, ProtocolError
from .messages import Kind, Message


@dataclass
class BarrierState:
    barrier_id: int
    expected: int
    arrived: dict[NodeId, None] = field(default_factory=dict)
    epoch: int = 0


@dataclass
class MutexState:
    lock_id: int
    holder: NodeId | None = None
    wait_queue: deque[NodeId] = field(default_factory=deque)


class SyncManager:
    """Server-side handler for BarrierEnter/LockReq/LockRelease messages."""

    def __init__(self, owner):
        # owner: the MemoryServer (provides .send and .nid)
        self.owner = owner
        self.barriers: dict[int, BarrierState] = {}
        self.mutexes: dict[int, MutexState] = {}

    def handle(self, msg: Message):
        if msg.kind is Kind.BARRIER_ENTER:
            self.barrier_enter(msg.page, msg.expected, msg.src)
        elif msg.kind is Kind.LOCK_REQ:
            self.lock_acquire(msg.page, msg.src)
        elif msg.kind is Kind.LOCK_RELEASE:
            self.lock_release(msg.page, msg.src)
        else:
            raise ProtocolError(f"sync manager got {msg.kind.name}")

    def barrier_enter(self, barrier_id: int, expected: int, node: NodeId):
        st = self.barriers.get(barrier_id)
        if st is None:
            st = BarrierState(barrier_id, expected)
            self.barriers[barrier_id] = st
        if st.expected != expected:
            raise ProtocolError(
                f"barrier {barrier_id}: arity mismatch ({expected} vs {st.expected})"
            )
        if node in st.arrived:
            raise ProtocolError(f"barrier {barrier_id}: duplicate arrival of {node}")
        st.arrived[node] = None
        if len(st.arrived) == st.expected:
            for waiter in st.arrived:
                self.owner.send(waiter, Kind.BARRIER_RELEASE, barrier_id)
            st.arrived = {}
            st.epoch += 1

    def lock_acquire(self, lock_id: int, node: NodeId):
        st = self.mutexes.setdefault(lock_id, MutexState(lock_id))
        if st.holder is None:
            st.holder = node
            self.owner.send(node, Kind.LOCK_GRANT, lock_id)
        elif st.holder == node:
            raise LockError(f"lock {lock_id}: reentrant acquire by {node}")
        elif node not in st.wait_queue:
            st.wait_queue.append(node)

    def lock_release(self, lock_id: int, node: NodeId):
        st = self.mutexes.get(lock_id)
        if st is None or st.holder != node:
            raise LockError(f"lock {lock_id}: release by non-holder {node}")
        st.holder = None
        if st.wait_queue:
            st.holder = st.wait_queue.popleft()
            self.owner.send(st.holder, Kind.LOCK_GRANT, lock_id)
