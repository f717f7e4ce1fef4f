"""FastAPI application exposing the calibration workflows.

Run with: uvicorn depthcal.service.app:app
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..errors import DepthcalError
from . import handlers
from .schemas import (
    EvalRequest,
    EvalResponse,
    GlobalFitRequest,
    GlobalFitResponse,
    GradCheckRequest,
    GradCheckResponse,
    HealthResponse,
    OracleRequest,
    OracleResponse,
    SensitivityRequest,
    SensitivityResponse,
    SynthRequest,
    SynthResponse,
    TrainRequest,
    TrainResponse,
)

app = FastAPI(
    title="depthcal",
    description="Metric depth calibration service: synthetic data, training, "
    "evaluation, oracle fits, and caption-sensitivity analysis.",
)


def _run(fn, req):
    try:
        return fn(req)
    except DepthcalError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


@app.get("/v1/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return handlers.health()


@app.post("/v1/synth", response_model=SynthResponse)
def synth(req: SynthRequest) -> SynthResponse:
    return _run(handlers.synth, req)


@app.post("/v1/train", response_model=TrainResponse)
def train(req: TrainRequest) -> TrainResponse:
    return _run(handlers.run_train, req)


@app.post("/v1/eval", response_model=EvalResponse)
def eval_(req: EvalRequest) -> EvalResponse:
    return _run(handlers.run_eval, req)


@app.post("/v1/oracle", response_model=OracleResponse)
def oracle(req: OracleRequest) -> OracleResponse:
    return _run(handlers.run_oracle, req)


@app.post("/v1/global", response_model=GlobalFitResponse)
def global_fit(req: GlobalFitRequest) -> GlobalFitResponse:
    return _run(handlers.run_global, req)


@app.post("/v1/gradcheck", response_model=GradCheckResponse)
def gradcheck(req: GradCheckRequest) -> GradCheckResponse:
    return _run(handlers.run_gradcheck, req)


@app.post("/v1/sensitivity", response_model=SensitivityResponse)
def sensitivity(req: SensitivityRequest) -> SensitivityResponse:
    return _run(handlers.run_sensitivity, req)
