"""Address-space geometry, node identity, and the server-side page directory.

Time is measured in integer nanoseconds of virtual (or wall) clock.
Sizes are plain byte counts; helpers accept "4K"/"16M"-style suffixes.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

from .errors import AddressError, ConfigError

_SIZE_SUFFIXES = {"K": 1 << 10, "M": 1 << 20, "G": 1 << 30}
_TIME_SUFFIXES = {"ns": 1, "us": 1_000, "ms": 1_000_000, "s": 1_000_000_000}

US = 1_000
MS = 1_000_000


def parse_size(text) -> int:
    """Parse a byte count like '4096', '4K', or '16M'."""
    if isinstance(text, int):
        return text
    t = text.strip().upper()
    mult = 1
    if t and t[-1] in _SIZE_SUFFIXES:
        mult = _SIZE_SUFFIXES[t[-1]]
        t = t[:-1]
    try:
        return int(t) * mult
    except ValueError:
        raise ConfigError(f"bad size value: {text!r}")


def parse_duration(text) -> int:
    """Parse a duration like '10ms', '50us', or '25000' (ns) into ns."""
    if isinstance(text, int):
        return text
    t = text.strip().lower()
    for suffix in ("ns", "us", "ms", "s"):
        if t.endswith(suffix):
            try:
                return int(t[: -len(suffix)]) * _TIME_SUFFIXES[suffix]
            except ValueError:
                break
    try:
        return int(t)
    except ValueError:
        raise ConfigError(f"bad duration value: {text!r}")


class Role(enum.Enum):
    SERVER = "s"
    COMPUTE = "c"


@dataclass(frozen=True, order=True)
class NodeId:
    role: Role
    index: int

    def __post_init__(self):
        if self.index < 0 or self.index >= 0x8000:
            raise ConfigError(f"node index out of range: {self.index}")

    def __str__(self):
        return f"{self.role.value}{self.index}"

    @property
    def is_server(self) -> bool:
        return self.role is Role.SERVER

    @property
    def is_compute(self) -> bool:
        return self.role is Role.COMPUTE

    def encode(self) -> int:
        """16-bit wire form: high bit set for compute nodes."""
        return (0x8000 if self.is_compute else 0) | self.index

    @classmethod
    def decode(cls, value: int) -> "NodeId":
        role = Role.COMPUTE if value & 0x8000 else Role.SERVER
        return cls(role, value & 0x7FFF)

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        text = text.strip()
        if len(text) < 2 or text[0] not in ("s", "c"):
            raise ConfigError(f"bad node id: {text!r}")
        role = Role.SERVER if text[0] == "s" else Role.COMPUTE
        return cls(role, int(text[1:]))


def server(index: int) -> NodeId:
    return NodeId(Role.SERVER, index)


def compute(index: int) -> NodeId:
    return NodeId(Role.COMPUTE, index)


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GasConfig:
    """Geometry and sizing of the global address space and cluster."""

    gas_size: int
    page_size: int
    cache_size: int
    num_servers: int = 1
    num_computes: int = 1
    slice_len: int = 10 * MS  # write time slice, local-clock ns

    def __post_init__(self):
        if not _is_pow2(self.page_size):
            raise ConfigError("page_size must be a power of two")
        if not _is_pow2(self.cache_size):
            raise ConfigError("cache_size must be a power of two")
        if self.gas_size % self.page_size != 0:
            raise ConfigError("page_size must divide gas_size")
        if self.cache_size % self.page_size != 0 or self.cache_size < self.page_size:
            raise ConfigError("cache_size must be a multiple of page_size, >= one page")
        if self.num_servers < 1 or self.num_computes < 1:
            raise ConfigError("need at least one server and one compute node")
        if self.slice_len <= 0:
            raise ConfigError("slice_len must be positive")

    @property
    def num_pages(self) -> int:
        return self.gas_size // self.page_size

    @property
    def cache_frames(self) -> int:
        return self.cache_size // self.page_size

    def page_of(self, addr: int) -> int:
        """Page number containing a byte offset into the GAS."""
        if addr < 0 or addr >= self.gas_size:
            raise AddressError(f"address {addr} outside GAS of {self.gas_size} bytes")
        return addr // self.page_size

    def page_range(self, page: int) -> tuple[int, int]:
        """(start offset, length) of a page."""
        if page < 0 or page >= self.num_pages:
            raise AddressError(f"page {page} out of range")
        return page * self.page_size, self.page_size

    def owner_of(self, page: int) -> NodeId:
        """Owning memory server: static round-robin by page number."""
        if page < 0 or page >= self.num_pages:
            raise AddressError(f"page {page} out of range")
        return NodeId(Role.SERVER, page % self.num_servers)

    def manager_of(self, sync_id: int) -> NodeId:
        """Server hosting a barrier/lock manager, by identifier hash."""
        return NodeId(Role.SERVER, sync_id % self.num_servers)

    def servers(self):
        return [NodeId(Role.SERVER, i) for i in range(self.num_servers)]

    def computes(self):
        return [NodeId(Role.COMPUTE, i) for i in range(self.num_computes)]

    def replace(self, **kw) -> "GasConfig":
        from dataclasses import replace

        return replace(self, **kw)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "GasConfig":
        kw = {}
        for key, raw in mapping.items():
            key = key.strip()
            if key in ("gas_size", "page_size", "cache_size"):
                kw[key] = parse_size(raw)
            elif key in ("num_servers", "num_computes"):
                kw[key] = int(raw)
            elif key == "slice_len":
                kw[key] = parse_duration(raw)
            elif key:
                raise ConfigError(f"unknown config key: {key!r}")
        for required in ("gas_size", "page_size", "cache_size"):
            if required not in kw:
                raise ConfigError(f"missing config key: {required}")
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "GasConfig":
        """Load from a plain key=value file ('#' starts a comment)."""
        mapping = {}
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"bad config line: {line!r}")
                key, value = line.split("=", 1)
                mapping[key.strip()] = value.strip()
        return cls.from_mapping(mapping)


class StatusTag(enum.Enum):
    CURRENT = "Current"
    CURRENT_ON_COMPUTE = "CurrentOnCompute"
    WRITE_LOCKED = "WriteLocked"


@dataclass(frozen=True)
class PageStatus:
    tag: StatusTag
    node: NodeId | None = None  # holder / writer, compute-only

    def __post_init__(self):
        if self.tag is StatusTag.CURRENT:
            if self.node is not None:
                raise ProtocolStateError("Current carries no node")
        else:
            if self.node is None or not self.node.is_compute:
                raise ProtocolStateError(f"{self.tag.value} needs a compute node")

    def __str__(self):
        return self.tag.value if self.node is None else f"{self.tag.value}({self.node})"


class ProtocolStateError(AssertionError):
    """Directory invariant broken; always a bug, never an input error."""


CURRENT = PageStatus(StatusTag.CURRENT)


def current_on_compute(holder: NodeId) -> PageStatus:
    return PageStatus(StatusTag.CURRENT_ON_COMPUTE, holder)


def write_locked(writer: NodeId) -> PageStatus:
    return PageStatus(StatusTag.WRITE_LOCKED, writer)


@dataclass
class PageDirectoryEntry:
    """Per-page record held by the owning memory server."""

    page: int
    server_copy: bytearray
    status: PageStatus = CURRENT
    # dict-as-ordered-set: deterministic iteration for invalidation fan-out
    readers: dict[NodeId, None] = field(default_factory=dict)
    write_queue: deque[NodeId] = field(default_factory=deque)

    def check_invariants(self):
        if self.status.tag is StatusTag.WRITE_LOCKED:
            w = self.status.node
            if w in self.readers:
                raise ProtocolStateError(f"writer {w} also registered as reader")
            if w in self.write_queue:
                raise ProtocolStateError(f"writer {w} also queued")
        if self.status.tag is StatusTag.CURRENT_ON_COMPUTE:
            if self.status.node not in self.readers:
                raise ProtocolStateError("holder must retain a read copy")
        if len(set(self.write_queue)) != len(self.write_queue):
            raise ProtocolStateError("duplicate nodes in write queue")
