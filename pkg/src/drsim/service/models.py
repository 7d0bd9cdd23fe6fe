"""Request/response envelopes for the simulation service.

Scenario documents travel as plain JSON objects; the core validator owns
their semantics and reports problems as diagnostics rather than schema
errors, so exit-code behavior is identical between the CLI and the API.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class ValidateRequest(BaseModel):
    scenario: dict


class ValidateResponse(BaseModel):
    ok: bool
    diagnostics: list[str] = Field(default_factory=list)


class RunRequest(BaseModel):
    scenario: dict
    seed: Optional[int] = None
    include_trace: bool = False


class RunResponse(BaseModel):
    report: dict
    invariant_failures: list[str] = Field(default_factory=list)
    trace_ndjson: Optional[str] = None


class SweepRequest(BaseModel):
    scenario: dict
    seed: Optional[int] = None


class SweepRow(BaseModel):
    mode: str
    duration_ms: int
    availability_percent: float
    rto_ms: Optional[int] = None
    rpo_time_ms: Optional[int] = None
    rpo_transactions: Optional[int] = None
    band_verdict: str
    invariant_failures: list[str] = Field(default_factory=list)


class SweepResponse(BaseModel):
    rows: list[SweepRow]
    ordering: dict


class InvalidScenarioResponse(BaseModel):
    detail: str
    diagnostics: list[str]
