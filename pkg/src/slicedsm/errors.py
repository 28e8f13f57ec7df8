"""Exception hierarchy shared across the engine."""


class DsmError(Exception):
    """Base class for all engine errors."""


class ConfigError(DsmError):
    """Invalid cluster/address-space configuration."""


class AddressError(DsmError):
    """Access outside the global address space."""


class ProtocolError(DsmError):
    """A message arrived that the state machine cannot legally accept."""


class LockError(DsmError):
    """Illegal lock acquire/release (reentrant acquire, foreign release)."""


class TransportError(DsmError):
    """Unknown destination or unusable channel."""


class FrameError(DsmError):
    """Malformed, truncated, or unknown-kind wire frame."""


class ConnectError(DsmError):
    """Cluster join failed: servers unreachable."""


class AllocError(DsmError):
    """Remote-paging region allocation failed (exhaustion/overlap)."""


class OracleViolation(DsmError):
    """Trace order contradicts the single-writer discipline during replay."""


class DeadlockError(DsmError):
    """Simulation quiesced with unfinished operations."""

    def __init__(self, report):
        super().__init__(str(report))
        self.report = report
