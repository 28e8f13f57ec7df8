"""Wire codec: framing, structured payloads, incremental decoding."""

import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slicedsm.core import NodeId, Role, compute, server
from slicedsm.errors import FrameError
from slicedsm.messages import (
    BODY_FIXED_LEN,
    DOWNGRADE,
    TRANSFER,
    FrameDecoder,
    Kind,
    Message,
    barrier_enter_payload,
    decode_frame,
    encode_frame,
    handoff_payload,
    redirect_payload,
    transfer_notice_payload,
)

node_ids = st.builds(
    NodeId,
    st.sampled_from([Role.SERVER, Role.COMPUTE]),
    st.integers(0, 0x7FFF),
)

messages = st.builds(
    Message,
    st.sampled_from(list(Kind)),
    st.integers(0, 2**64 - 1),
    node_ids,
    st.integers(0, 2**64 - 1),
    st.binary(max_size=256),
)


class TestRoundTrip:
    @settings(max_examples=300)
    @given(messages)
    def test_decode_encode_identity(self, msg):
        assert decode_frame(encode_frame(msg)) == msg

    def test_fixed_body_width(self):
        msg = Message(Kind.INVALIDATE, 5, compute(1), 7)
        frame = encode_frame(msg)
        assert len(frame) == 4 + BODY_FIXED_LEN
        assert BODY_FIXED_LEN == 20

    def test_length_field_counts_payload(self):
        msg = Message(Kind.PAGE_DATA, 0, server(0), 1, bytes(4096))
        frame = encode_frame(msg)
        (length,) = struct.unpack_from("<I", frame)
        assert length == 20 + 4096


class TestRejection:
    def test_every_truncation_rejected(self):
        frame = encode_frame(Message(Kind.WRITEBACK, 3, compute(2), 9, b"abc"))
        for cut in range(len(frame)):
            with pytest.raises(FrameError):
                decode_frame(frame[:cut])

    def test_trailing_bytes_rejected(self):
        frame = encode_frame(Message(Kind.READ_REQ, 1, compute(0), 1))
        with pytest.raises(FrameError):
            decode_frame(frame + b"\x00")

    def test_unknown_kind_tag_rejected(self):
        body = struct.pack("<HQHQ", 0xFFFF, 0, compute(0).encode(), 1)
        frame = struct.pack("<I", len(body)) + body
        with pytest.raises(FrameError):
            decode_frame(frame)


class TestFrameDecoder:
    def test_byte_at_a_time(self):
        msgs = [
            Message(Kind.READ_REQ, 1, compute(0), 1),
            Message(Kind.PAGE_DATA, 1, server(0), 1, bytes(64)),
            Message(Kind.LOCK_REQ, 9, compute(3), 2),
        ]
        stream = b"".join(encode_frame(m) for m in msgs)
        decoder = FrameDecoder()
        out = []
        for i in range(len(stream)):
            out.extend(decoder.feed(stream[i : i + 1]))
        assert out == msgs
        assert decoder.pending_bytes == 0

    def test_partial_frame_never_consumed(self):
        frame = encode_frame(Message(Kind.WRITE_GRANT, 2, server(1), 4, bytes(128)))
        decoder = FrameDecoder()
        assert decoder.feed(frame[:-1]) == []
        assert decoder.pending_bytes == len(frame) - 1
        assert decoder.feed(frame[-1:]) == [decode_frame(frame)]

    @settings(max_examples=50)
    @given(st.lists(messages, min_size=1, max_size=8), st.integers(1, 97))
    def test_chunked_stream_preserves_order(self, msgs, step):
        stream = b"".join(encode_frame(m) for m in msgs)
        decoder = FrameDecoder()
        out = []
        for i in range(0, len(stream), step):
            out.extend(decoder.feed(stream[i : i + step]))
        assert out == msgs


class TestStructuredPayloads:
    def test_redirect_target_and_flag(self):
        msg = Message(Kind.REDIRECT, 0, server(0), 1, redirect_payload(compute(2), True))
        assert msg.target == compute(2)
        assert msg.holder_is_writer is True
        plain = Message(Kind.REDIRECT, 0, server(0), 1, redirect_payload(compute(5)))
        assert plain.holder_is_writer is False

    def test_handoff_flag(self):
        msg = Message(Kind.HANDOFF_REQ, 0, compute(1), 1, handoff_payload(True))
        assert msg.holder_is_writer is True

    def test_transfer_notice_fields(self):
        p = transfer_notice_payload(compute(3), DOWNGRADE)
        msg = Message(Kind.TRANSFER_NOTICE, 0, compute(1), 1, p)
        assert msg.new_writer == compute(3)
        assert msg.variant == DOWNGRADE
        assert (
            Message(
                Kind.TRANSFER_NOTICE, 0, compute(1), 1, transfer_notice_payload(compute(2))
            ).variant
            == TRANSFER
        )

    def test_barrier_arity(self):
        msg = Message(Kind.BARRIER_ENTER, 7, compute(0), 1, barrier_enter_payload(4))
        assert msg.expected == 4

    def test_accessors_guard_wrong_kinds(self):
        msg = Message(Kind.READ_REQ, 0, compute(0), 1)
        for attr in ("target", "new_writer", "variant", "expected", "holder_is_writer"):
            with pytest.raises(FrameError):
                getattr(msg, attr)
