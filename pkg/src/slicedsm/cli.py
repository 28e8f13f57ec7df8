"""Command-line interface.

Most subcommands are thin clients over the HTTP service: by default the
request is routed to an in-process app instance (no server needed), or
to a running one with --server. `serve` starts the HTTP service and
`serve-node` runs a memory server over the TCP stream backend.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import httpx

from .core import GasConfig, NodeId, parse_duration, parse_size
from .errors import ConfigError
from .transport import StreamTransport, load_hosts


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def _sizes(text: str) -> list[int]:
    return [parse_size(part) for part in text.split(",") if part.strip()]


def cmd_bench(args) -> int:
    if args.backend == "stream":
        return _bench_stream(args)
    payload = {
        "gas_size": parse_size(args.gas_size),
        "page_sizes": _sizes(args.page_sizes) if args.page_sizes else [],
        "cache_sizes": _sizes(args.cache_sizes) if args.cache_sizes else [],
        "num_servers": args.servers,
        "slice_len_ns": parse_duration(args.slice),
        "check": args.check,
    }
    with _client(args.server) as client:
        resp = client.post("/bench", json=payload)
    if resp.status_code != 200:
        print(f"bench failed: {resp.status_code} {resp.text}", file=sys.stderr)
        return 2
    body = resp.json()
    _write_csv(body["samples"], args.out)
    if args.check:
        for check in body["trends"]:
            state = "PASS" if check["passed"] else "FAIL"
            print(f"[{state}] {check['name']}: {check['detail']}")
        if not body["trends_ok"]:
            return 1
    return 0


def _bench_stream(args) -> int:
    from .bench import run_stream_bench

    page_sizes = _sizes(args.page_sizes) if args.page_sizes else []
    cache_sizes = _sizes(args.cache_sizes) if args.cache_sizes else []
    if len(page_sizes) != 1 or len(cache_sizes) != 1:
        print(
            "stream backend measures one grid cell per server deployment: "
            "give exactly one --page-sizes and one --cache-sizes value",
            file=sys.stderr,
        )
        return 2
    config = GasConfig(
        gas_size=parse_size(args.gas_size),
        page_size=page_sizes[0],
        cache_size=cache_sizes[0],
        num_servers=args.servers,
        num_computes=args.computes,
        slice_len=parse_duration(args.slice),
    )
    hosts = load_hosts(args.hosts)
    samples = run_stream_bench(config, hosts)
    _write_csv([vars(s) for s in samples], args.out)
    return 0


def _write_csv(samples: list[dict], path: str):
    if not samples:
        print("no samples produced", file=sys.stderr)
        raise SystemExit(2)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["op", "page_size", "cache_size", "backend", "value"])
        for s in samples:
            writer.writerow(
                [s["op"], s["page_size"], s["cache_size"], s["backend"], s["value"]]
            )
    print(f"wrote {len(samples)} samples to {path}")


def cmd_simulate(args) -> int:
    config = _config_payload(args)
    payload = {
        "config": config,
        "profile": args.profile,
        "seed": args.seed,
        "check": True,
        "oracle": True,
        "include_trace": args.trace_out is not None,
    }
    with _client(args.server) as client:
        resp = client.post("/simulate", json=payload)
    if resp.status_code != 200:
        print(f"simulate failed: {resp.status_code} {resp.text}", file=sys.stderr)
        return 2
    body = resp.json()
    if args.trace_out:
        with open(args.trace_out, "w") as fh:
            fh.write(body["trace"])
    print(json.dumps({k: v for k, v in body.items() if k != "trace"}, indent=2))
    ok = body["oracle_match"] and not body["violations"]
    return 0 if ok else 1


def cmd_check_trace(args) -> int:
    with open(args.trace) as fh:
        text = fh.read()
    payload = {"config": _config_payload(args), "trace": text}
    with _client(args.server) as client:
        resp = client.post("/trace/check", json=payload)
    if resp.status_code != 200:
        print(f"check failed: {resp.status_code} {resp.text}", file=sys.stderr)
        return 2
    body = resp.json()
    for v in body["violations"]:
        print(f"VIOLATION {v['kind']} {v['event_index']}")
    print(body["report"])
    return 0 if body["ok"] else 1


def _config_payload(args) -> dict:
    if getattr(args, "config", None):
        cfg = GasConfig.from_file(args.config)
    else:
        cfg = GasConfig(
            gas_size=parse_size(args.gas_size),
            page_size=parse_size(args.page_size),
            cache_size=parse_size(args.cache_size),
            num_servers=args.servers,
            num_computes=args.computes,
            slice_len=parse_duration(args.slice),
        )
    return {
        "gas_size": cfg.gas_size,
        "page_size": cfg.page_size,
        "cache_size": cfg.cache_size,
        "num_servers": cfg.num_servers,
        "num_computes": cfg.num_computes,
        "slice_len_ns": cfg.slice_len,
    }


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("slicedsm.service:app", host=args.host, port=args.port)
    return 0


def cmd_serve_node(args) -> int:
    """Run one memory server node over the TCP stream backend."""
    from .protocol import MemoryServer, NodeEnv

    config = GasConfig.from_file(args.config)
    hosts = load_hosts(args.hosts)
    nid = NodeId.parse(args.node)
    transport = StreamTransport(nid, hosts)

    class _Env(NodeEnv):
        def send(self, dst, msg):
            transport.send(dst, msg)

    server = MemoryServer(nid, config, _Env())
    print(f"memory server {nid} listening on {hosts[nid][0]}:{hosts[nid][1]}")
    try:
        while True:
            msg = transport.recv(timeout=1.0)
            if msg is not None:
                server.handle(msg)
    except KeyboardInterrupt:
        return 0
    finally:
        transport.close()


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file (flags override)")
    p.add_argument("--gas-size", default="16M")
    p.add_argument("--page-size", default="4K")
    p.add_argument("--cache-size", default="64K")
    p.add_argument("--servers", type=int, default=2)
    p.add_argument("--computes", type=int, default=4)
    p.add_argument("--slice", default="10ms", help="write time slice, e.g. 10ms")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slicedsm")
    parser.add_argument("--server", help="URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="latency/bandwidth sweep, CSV output")
    b.add_argument("--gas-size", default="16M")
    b.add_argument("--page-sizes", default="", help="comma list, e.g. 4K,64K,1M")
    b.add_argument("--cache-sizes", default="", help="comma list, e.g. 2M,4M,8M,16M")
    b.add_argument("--servers", type=int, default=1)
    b.add_argument("--computes", type=int, default=1)
    b.add_argument("--slice", default="10ms")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--backend", choices=["sim", "stream"], default="sim")
    b.add_argument("--hosts", help="hosts file for the stream backend")
    b.add_argument("--out", default="bench.csv", help="CSV output path")
    b.add_argument("--check", action="store_true",
                   help="run trend assertions; exit nonzero on failure")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("simulate", help="run a seeded workload in the simulator")
    _add_config_flags(s)
    s.add_argument("--profile", default="lock-protected",
                   choices=["lock-protected", "write-contended", "read-heavy"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trace-out", help="write the message trace to this file")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("check-trace", help="verify invariants over a trace file")
    _add_config_flags(c)
    c.add_argument("trace", help="trace file (tab-separated log)")
    c.set_defaults(func=cmd_check_trace)

    v = sub.add_parser("serve", help="start the HTTP service")
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8000)
    v.set_defaults(func=cmd_serve)

    n = sub.add_parser("serve-node", help="run a memory server over TCP")
    n.add_argument("--node", required=True, help="node id, e.g. s0")
    n.add_argument("--hosts", help="hosts file (or set DSM_HOSTS)")
    n.add_argument("--config", required=True, help="key=value config file")
    n.set_defaults(func=cmd_serve_node)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
