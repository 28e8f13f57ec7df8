"""Protocol message vocabulary and the length-prefixed wire codec.

Frame layout (little-endian, fixed widths):

    length  u32   byte count of the body
    body    kind u16 | page u64 | src u16 | seq u64 | payload bytes

`dst` never travels: the connection (or simulator event) implies it.
Structured extras (redirect target, handoff marker, transfer variant,
barrier arity) live inside the payload so that the frame shape stays
uniform across kinds.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .core import NodeId
from .errors import FrameError

_HEADER = struct.Struct("<I")
_BODY_FIXED = struct.Struct("<HQHQ")
BODY_FIXED_LEN = _BODY_FIXED.size  # 20 bytes


class Kind(enum.Enum):
    READ_REQ = 1
    WRITE_REQ = 2
    PAGE_DATA = 3
    WRITE_GRANT = 4
    REDIRECT = 5
    INVALIDATE = 6
    INVALIDATE_ACK = 7
    COPY_REQ = 8
    HANDOFF_REQ = 9
    PRIVILEGE_TRANSFER = 10
    TRANSFER_NOTICE = 11
    WRITEBACK = 12
    WRITEBACK_ACK = 13
    BARRIER_ENTER = 14
    BARRIER_RELEASE = 15
    LOCK_REQ = 16
    LOCK_GRANT = 17
    LOCK_RELEASE = 18
    READER_DROP = 19


# kinds whose payload is exactly one page of data
DATA_KINDS = frozenset(
    {Kind.PAGE_DATA, Kind.WRITE_GRANT, Kind.PRIVILEGE_TRANSFER, Kind.WRITEBACK}
)

# TransferNotice variants
TRANSFER = 0  # write privilege handed to a new writer
DOWNGRADE = 1  # writer downgraded itself to CurrentOnCompute holder


@dataclass(frozen=True)
class Message:
    kind: Kind
    page: int
    src: NodeId
    seq: int
    payload: bytes = b""

    # --- structured payload accessors -------------------------------------

    @property
    def target(self) -> NodeId:
        """Redirect target node."""
        if self.kind is not Kind.REDIRECT or len(self.payload) < 2:
            raise FrameError("message has no redirect target")
        return NodeId.decode(struct.unpack_from("<H", self.payload)[0])

    @property
    def holder_is_writer(self) -> bool:
        """Whether the redirect (or the handoff request echoing one) names
        the page's granted writer rather than a plain read-copy holder."""
        if self.kind is Kind.REDIRECT and len(self.payload) >= 3:
            return bool(self.payload[2])
        if self.kind is Kind.HANDOFF_REQ and len(self.payload) >= 1:
            return bool(self.payload[0])
        raise FrameError("message has no holder flag")

    @property
    def new_writer(self) -> NodeId:
        if self.kind is not Kind.TRANSFER_NOTICE or len(self.payload) < 3:
            raise FrameError("message has no new_writer")
        return NodeId.decode(struct.unpack_from("<H", self.payload)[0])

    @property
    def variant(self) -> int:
        if self.kind is not Kind.TRANSFER_NOTICE or len(self.payload) < 3:
            raise FrameError("message has no variant")
        return self.payload[2]

    @property
    def expected(self) -> int:
        if self.kind is not Kind.BARRIER_ENTER or len(self.payload) < 4:
            raise FrameError("message has no barrier arity")
        return struct.unpack_from("<I", self.payload)[0]


def redirect_payload(target: NodeId, holder_is_writer: bool = False) -> bytes:
    return struct.pack("<HB", target.encode(), int(holder_is_writer))


def handoff_payload(holder_is_writer: bool) -> bytes:
    return struct.pack("<B", int(holder_is_writer))


def transfer_notice_payload(new_writer: NodeId, variant: int = TRANSFER) -> bytes:
    return struct.pack("<HB", new_writer.encode(), variant)


def barrier_enter_payload(expected: int) -> bytes:
    return struct.pack("<I", expected)


def encode_frame(msg: Message) -> bytes:
    body = _BODY_FIXED.pack(msg.kind.value, msg.page, msg.src.encode(), msg.seq)
    body += msg.payload
    return _HEADER.pack(len(body)) + body


def decode_body(body: bytes) -> Message:
    if len(body) < BODY_FIXED_LEN:
        raise FrameError(f"frame body too short: {len(body)} bytes")
    kind_tag, page, src, seq = _BODY_FIXED.unpack_from(body)
    try:
        kind = Kind(kind_tag)
    except ValueError:
        raise FrameError(f"unknown message kind tag: {kind_tag:#06x}")
    return Message(kind, page, NodeId.decode(src), seq, bytes(body[BODY_FIXED_LEN:]))


def decode_frame(data: bytes) -> Message:
    """Decode exactly one complete frame; anything else is a FrameError."""
    if len(data) < _HEADER.size:
        raise FrameError("truncated frame: missing length header")
    (length,) = _HEADER.unpack_from(data)
    if len(data) < _HEADER.size + length:
        raise FrameError("truncated frame: incomplete body")
    if len(data) > _HEADER.size + length:
        raise FrameError("trailing bytes after frame")
    return decode_body(data[_HEADER.size :])


class FrameDecoder:
    """Incremental decoder for a byte stream; never consumes partial frames."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Message]:
        self._buf += data
        out = []
        while True:
            if len(self._buf) < _HEADER.size:
                break
            (length,) = _HEADER.unpack_from(self._buf)
            end = _HEADER.size + length
            if len(self._buf) < end:
                break
            out.append(decode_body(bytes(self._buf[_HEADER.size : end])))
            del self._buf[:end]
        return out

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)
