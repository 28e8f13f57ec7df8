"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ConfigModel(BaseModel):
    gas_size: int = 16 * 1024 * 1024
    page_size: int = 4096
    cache_size: int = 64 * 1024
    num_servers: int = 2
    num_computes: int = 4
    slice_len_ns: int = 10_000_000


class SimulateRequest(BaseModel):
    config: ConfigModel = ConfigModel()
    profile: str = "lock-protected"
    seed: int = 0
    check: bool = True
    oracle: bool = True
    include_trace: bool = False


class ViolationModel(BaseModel):
    kind: str
    event_index: int


class SimulateResponse(BaseModel):
    num_events: int
    trace_sha256: str
    oracle_match: bool | None = None
    violations: list[ViolationModel] = Field(default_factory=list)
    trace: str | None = None


class TraceCheckRequest(BaseModel):
    config: ConfigModel = ConfigModel()
    trace: str


class TraceCheckResponse(BaseModel):
    ok: bool
    violations: list[ViolationModel] = Field(default_factory=list)
    report: str


class BenchRequest(BaseModel):
    gas_size: int = 16 * 1024 * 1024
    page_sizes: list[int] = Field(default_factory=list)
    cache_sizes: list[int] = Field(default_factory=list)
    num_servers: int = 1
    slice_len_ns: int = 10_000_000
    latency_reps: int = 9
    check: bool = False


class SampleModel(BaseModel):
    op: str
    page_size: int
    cache_size: int
    backend: str
    value: float


class TrendCheckModel(BaseModel):
    name: str
    passed: bool
    detail: str


class BenchResponse(BaseModel):
    samples: list[SampleModel]
    trends: list[TrendCheckModel] = Field(default_factory=list)
    trends_ok: bool | None = None


class HealthResponse(BaseModel):
    status: str
    version: str
