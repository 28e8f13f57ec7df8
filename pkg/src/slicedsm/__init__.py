"""User-level page-based distributed shared memory engine with a
time-slice write-invalidate consistency protocol, a deterministic
simulated-cluster harness, and a latency/bandwidth benchmark."""

from .core import GasConfig, NodeId, PageDirectoryEntry, PageStatus, Role
from .errors import (
    AddressError,
    AllocError,
    ConfigError,
    ConnectError,
    DeadlockError,
    DsmError,
    FrameError,
    LockError,
    OracleViolation,
    ProtocolError,
    TransportError,
)
from .messages import Kind, Message, decode_frame, encode_frame
from .node_api import DsmRegion, dsm_map
from .sim import (
    ClockSkew,
    SimCluster,
    check_trace,
    gen_workload,
    run,
    serial_oracle,
)
from .transport import LatencyModel

__version__ = "0.1.0"

__all__ = [
    "GasConfig",
    "NodeId",
    "Role",
    "PageStatus",
    "PageDirectoryEntry",
    "Kind",
    "Message",
    "encode_frame",
    "decode_frame",
    "LatencyModel",
    "DsmRegion",
    "dsm_map",
    "ClockSkew",
    "SimCluster",
    "run",
    "gen_workload",
    "serial_oracle",
    "check_trace",
    "DsmError",
    "ConfigError",
    "AddressError",
    "ProtocolError",
    "LockError",
    "TransportError",
    "FrameError",
    "ConnectError",
    "AllocError",
    "OracleViolation",
    "DeadlockError",
]
