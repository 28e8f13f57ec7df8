"""FastAPI service wrapping the DSM engine: run simulations, check
traces, and drive benchmark sweeps over HTTP."""

from __future__ import annotations

import hashlib

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..bench import BenchGrid, assert_trends, run_bandwidth_sweep, run_latency_sweep
from ..core import GasConfig
from ..errors import ConfigError, DeadlockError
from ..sim import check_trace, gen_workload, parse_trace, run, serial_oracle
from ..transport import LatencyModel
from .models import (
    BenchRequest,
    BenchResponse,
    ConfigModel,
    HealthResponse,
    SampleModel,
    SimulateRequest,
    SimulateResponse,
    TraceCheckRequest,
    TraceCheckResponse,
    TrendCheckModel,
    ViolationModel,
)


def _to_config(m: ConfigModel) -> GasConfig:
    try:
        return GasConfig(
            gas_size=m.gas_size,
            page_size=m.page_size,
            cache_size=m.cache_size,
            num_servers=m.num_servers,
            num_computes=m.num_computes,
            slice_len=m.slice_len_ns,
        )
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc))


def create_app() -> FastAPI:
    app = FastAPI(title="slicedsm", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest):
        config = _to_config(req.config)
        try:
            workload = gen_workload(req.seed, req.profile, config)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        try:
            result = run(config, workload)
        except DeadlockError as exc:
            raise HTTPException(status_code=409, detail=str(exc.report))
        text = result.trace_text()
        resp = SimulateResponse(
            num_events=len(result.trace),
            trace_sha256=hashlib.sha256(text.encode()).hexdigest(),
            trace=text if req.include_trace else None,
        )
        if req.check:
            report = check_trace(result.trace, config)
            resp.violations = [
                ViolationModel(kind=k, event_index=i) for k, i in report.violations
            ]
        if req.oracle:
            oracle = serial_oracle(config, workload, result.trace)
            resp.oracle_match = oracle.image == result.image
        return resp

    @app.post("/trace/check", response_model=TraceCheckResponse)
    def trace_check(req: TraceCheckRequest):
        config = _to_config(req.config)
        records = parse_trace(req.trace, config, LatencyModel())
        report = check_trace(records, config)
        return TraceCheckResponse(
            ok=report.ok,
            violations=[
                ViolationModel(kind=k, event_index=i) for k, i in report.violations
            ],
            report=str(report),
        )

    @app.post("/bench", response_model=BenchResponse)
    def bench(req: BenchRequest):
        grid = BenchGrid(
            gas_size=req.gas_size,
            page_sizes=tuple(req.page_sizes) or BenchGrid.page_sizes,
            cache_sizes=tuple(req.cache_sizes),
            num_servers=req.num_servers,
            slice_len=req.slice_len_ns,
        )
        model = LatencyModel()
        samples = run_latency_sweep(grid, model, reps=req.latency_reps)
        samples += run_bandwidth_sweep(grid, model)
        resp = BenchResponse(
            samples=[SampleModel(**vars(s)) for s in samples],
        )
        if req.check:
            report = assert_trends(samples, grid, model)
            resp.trends = [TrendCheckModel(**vars(c)) for c in report.checks]
            resp.trends_ok = report.ok
        return resp

    return app


app = create_app()
