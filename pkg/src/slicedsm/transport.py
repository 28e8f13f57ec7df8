"""Message channels between nodes.

Two backends share the frame codec from `messages`:

* the deterministic simulated network lives in `sim` and uses
  `LatencyModel` to timestamp deliveries;
* `StreamTransport` below runs nodes as separate processes over TCP,
  with per-pair FIFO exactly-once delivery inherited from the stream.

Hosts file format, one line per node::

    s0 127.0.0.1:7000
    c0 127.0.0.1:7100

The DSM_HOSTS environment variable overrides the hosts file path.
"""

from __future__ import annotations

import math
import os
import queue
import socket
import threading
from dataclasses import dataclass

from .core import NodeId
from .errors import ConfigError, TransportError
from .messages import FrameDecoder, Message, encode_frame

US = 1_000


@dataclass(frozen=True)
class LatencyModel:
    """Two-term network cost: fixed per-message latency plus payload serialization.

    `local_bandwidth` models the node-local memory copy speed so that cache
    hits and page installs consume virtual time too; it never affects the
    wire. All bandwidths are bytes per microsecond; latency is nanoseconds.
    """

    base_latency: int = 10 * US
    bandwidth: float = 250.0
    local_bandwidth: float = 4096.0

    def __post_init__(self):
        if self.base_latency < 0 or self.bandwidth <= 0 or self.local_bandwidth <= 0:
            raise ConfigError("bad latency model parameters")

    def wire_ns(self, payload_bytes: int) -> int:
        return self.base_latency + math.ceil(payload_bytes * 1000 / self.bandwidth)

    def copy_ns(self, nbytes: int) -> int:
        return math.ceil(nbytes * 1000 / self.local_bandwidth)


def parse_hosts(text: str) -> dict[NodeId, tuple[str, int]]:
    hosts = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or ":" not in parts[1]:
            raise ConfigError(f"bad hosts line: {line!r}")
        host, port = parts[1].rsplit(":", 1)
        try:
            hosts[NodeId.parse(parts[0])] = (host, int(port))
        except ValueError as exc:
            raise ConfigError(f"bad hosts line: {line!r}") from exc
    return hosts


def load_hosts(path=None) -> dict[NodeId, tuple[str, int]]:
    path = os.environ.get("DSM_HOSTS", path)
    if path is None:
        raise ConfigError("no hosts file given and DSM_HOSTS unset")
    with open(path) as fh:
        return parse_hosts(fh.read())


class StreamTransport:
    """Framed TCP channels for one node.

    Each ordered node pair uses the sender's outgoing connection, so TCP
    ordering gives per-pair FIFO. Reader threads funnel decoded messages
    into a single inbox, preserving each connection's order.
    """

    def __init__(self, nid: NodeId, hosts: dict[NodeId, tuple[str, int]]):
        if nid not in hosts:
            raise TransportError(f"{nid} missing from hosts map")
        self.nid = nid
        self.hosts = hosts
        self.inbox: queue.Queue[Message] = queue.Queue()
        self._out: dict[NodeId, socket.socket] = {}
        self._out_lock = threading.Lock()
        self._closed = False
        host, port = hosts[nid]
        self._listener = socket.create_server((host, port))
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _accept_loop(self):
        while not self._closed:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(
                target=self._read_loop, args=(conn,), daemon=True
            ).start()

    def _read_loop(self, conn: socket.socket):
        decoder = FrameDecoder()
        while True:
            try:
                data = conn.recv(65536)
            except OSError:
                return
            if not data:
                return
            for msg in decoder.feed(data):
                self.inbox.put(msg)

    def send(self, dst: NodeId, msg: Message):
        if dst not in self.hosts:
            raise TransportError(f"unknown destination {dst}")
        if dst == self.nid:
            self.inbox.put(msg)  # loopback, same FIFO contract
            return
        with self._out_lock:
            sock = self._out.get(dst)
            if sock is None:
                try:
                    sock = socket.create_connection(self.hosts[dst], timeout=10)
                except OSError as exc:
                    raise TransportError(f"cannot reach {dst}: {exc}") from exc
                self._out[dst] = sock
            sock.sendall(encode_frame(msg))

    def recv(self, timeout: float | None = None) -> Message | None:
        try:
            return self.inbox.get(timeout=timeout)
        except queue.Empty:
            return None

    def close(self):
        self._closed = True
        try:
            self._listener.close()
        except OSError:
            pass
        with self._out_lock:
            for sock in self._out.values():
                try:
                    sock.close()
                except OSError:
                    pass
            self._out.clear()
