"""FastAPI service wrapping the simulator: validate scenarios, execute runs,
and compare recovery modes, all as synchronous POSTs (runs are bounded and
deterministic, so there is no job queue)."""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..scenario import parse_scenario
from ..simulation import run_scenario
from ..sweep import sweep_modes
from .models import (HealthResponse, InvalidScenarioResponse, RunRequest,
                     RunResponse, SweepRequest, SweepResponse,
                     ValidateRequest, ValidateResponse)


def _invalid(diagnostics: list[str]) -> JSONResponse:
    body = InvalidScenarioResponse(detail="scenario failed validation",
                                   diagnostics=diagnostics)
    return JSONResponse(status_code=400, content=body.model_dump())


def create_app() -> FastAPI:
    app = FastAPI(title="drsim", version=__version__,
                  description="Deterministic two-zone HA/DR simulator")

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/validate", response_model=ValidateResponse)
    def validate(req: ValidateRequest) -> ValidateResponse:
        _, diagnostics = parse_scenario(req.scenario)
        return ValidateResponse(ok=not diagnostics, diagnostics=diagnostics)

    @app.post("/run", response_model=RunResponse,
              responses={400: {"model": InvalidScenarioResponse}})
    def run(req: RunRequest):
        spec, diagnostics = parse_scenario(req.scenario)
        if diagnostics or spec is None:
            return _invalid(diagnostics)
        result = run_scenario(spec, seed=req.seed)
        return RunResponse(
            report=result.report,
            invariant_failures=result.invariant_failures,
            trace_ndjson=result.trace_ndjson if req.include_trace else None)

    @app.post("/sweep", response_model=SweepResponse,
              responses={400: {"model": InvalidScenarioResponse}})
    def sweep(req: SweepRequest):
        _, diagnostics = parse_scenario(req.scenario)
        if diagnostics:
            return _invalid(diagnostics)
        table, sweep_diags = sweep_modes(req.scenario, seed=req.seed)
        if sweep_diags:
            return _invalid(sweep_diags)
        return SweepResponse(rows=table["rows"], ordering=table["ordering"])

    return app


app = create_app()
