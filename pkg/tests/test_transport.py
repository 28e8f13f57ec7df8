"""Latency model arithmetic, hosts files, and the TCP transport."""

import socket

import pytest

from slicedsm.core import compute, server
from slicedsm.errors import ConfigError, TransportError
from slicedsm.messages import Kind, Message
from slicedsm.transport import (
    LatencyModel,
    StreamTransport,
    load_hosts,
    parse_hosts,
)


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class TestLatencyModel:
    def test_wire_time_includes_size(self):
        model = LatencyModel()
        assert model.wire_ns(0) == 10_000
        assert model.wire_ns(4096) == 10_000 + 16_384

    def test_header_only_message_is_base_latency(self):
        model = LatencyModel()
        assert model.wire_ns(0) == model.base_latency

    def test_wire_time_monotone_in_size(self):
        model = LatencyModel()
        times = [model.wire_ns(n) for n in (0, 64, 4096, 1 << 20)]
        assert times == sorted(times)
        assert times[0] < times[-1]

    def test_local_copy_faster_than_wire(self):
        model = LatencyModel()
        assert model.copy_ns(4096) < model.wire_ns(4096)

    def test_bad_parameters_rejected(self):
        with pytest.raises(ConfigError):
            LatencyModel(base_latency=-1)
        with pytest.raises(ConfigError):
            LatencyModel(bandwidth=0)


class TestHostsFiles:
    def test_parse_hosts(self):
        text = "# comment\ns0 127.0.0.1:7000\n\nc0 127.0.0.1:7100\n"
        hosts = parse_hosts(text)
        assert hosts == {
            server(0): ("127.0.0.1", 7000),
            compute(0): ("127.0.0.1", 7100),
        }

    def test_parse_hosts_rejects_bad_lines(self):
        for text in ("s0", "s0 nocolon", "s0 host:notaport", "zz 1:2"):
            with pytest.raises(ConfigError):
                parse_hosts(text)

    def test_load_hosts_env_override(self, tmp_path, monkeypatch):
        p = tmp_path / "hosts"
        p.write_text("s0 127.0.0.1:7000\n")
        monkeypatch.setenv("DSM_HOSTS", str(p))
        assert server(0) in load_hosts(None)

    def test_load_hosts_without_source_fails(self, monkeypatch):
        monkeypatch.delenv("DSM_HOSTS", raising=False)
        with pytest.raises(ConfigError):
            load_hosts(None)


class TestStreamTransport:
    def test_loopback_round_trip(self):
        hosts = {compute(0): ("127.0.0.1", free_port())}
        t = StreamTransport(compute(0), hosts)
        try:
            msg = Message(Kind.READ_REQ, 5, compute(0), 1)
            t.send(compute(0), msg)
            assert t.recv(timeout=2.0) == msg
        finally:
            t.close()

    def test_two_nodes_preserve_fifo_order(self):
        hosts = {
            server(0): ("127.0.0.1", free_port()),
            compute(0): ("127.0.0.1", free_port()),
        }
        srv = StreamTransport(server(0), hosts)
        cli = StreamTransport(compute(0), hosts)
        try:
            sent = [
                Message(Kind.WRITE_REQ, i, compute(0), i, bytes(i % 97))
                for i in range(50)
            ]
            for m in sent:
                cli.send(server(0), m)
            got = [srv.recv(timeout=2.0) for _ in sent]
            assert got == sent
        finally:
            cli.close()
            srv.close()

    def test_unknown_destination_rejected(self):
        hosts = {compute(0): ("127.0.0.1", free_port())}
        t = StreamTransport(compute(0), hosts)
        try:
            with pytest.raises(TransportError):
                t.send(server(3), Message(Kind.READ_REQ, 0, compute(0), 1))
        finally:
            t.close()

    def test_recv_timeout_returns_none(self):
        hosts = {compute(0): ("127.0.0.1", free_port())}
        t = StreamTransport(compute(0), hosts)
        try:
            assert t.recv(timeout=0.05) is None
        finally:
            t.close()
