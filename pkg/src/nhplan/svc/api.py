"""HTTP API over the run store.

POST /cohorts            upload a resident CSV (explicit id, 409 on repeat)
POST /runs               submit a run config; executes asynchronously
GET  /runs/{id}          run record with status and result summary
GET  /runs/{id}/trace    trace CSV for simulate runs
GET  /scenarios/compare  synchronous scenario comparison
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, field_validator

from ..capacity import CapacityError
from ..cohort import CohortError
from ..workforce import WorkforceError
from .runs import RunConfig, RunStore, scenario_compare


class CohortUpload(BaseModel):
    cohort_id: str = Field(min_length=1, max_length=64, pattern=r"^[A-Za-z0-9_\-]+$")
    csv_text: str


class CapacityBody(BaseModel):
    kappa0: int | None = None
    tau_c: float = 0.85
    eta: float = 0.95
    max_iterations: int = 500
    minimality_sweep: bool = True

    @field_validator("tau_c", "eta")
    @classmethod
    def _unit_interval(cls, v, info):
        if not (0.0 < v <= 1.0):
            raise ValueError(f"{info.field_name} must be in (0, 1]")
        return v


class CostBody(BaseModel):
    per_staff_day_cost: float = 88.0
    k_minutes: float = 480.0
    understaffing_cost: float = 0.30
    overstaffing_cost: float = 0.05
    saa_samples: int = 100


class PatternBody(BaseModel):
    template_days: int = 14
    fulltime_days: int = 10
    parttime_day_options: list[int] = [4, 6]
    weekend_cap: int = 2
    parttime_biweekly_cap: int = 8
    weekend_day_indices: list[int] = [6, 7, 13, 14]


class RunBody(BaseModel):
    cohort_id: str
    kind: str = "scenario"
    scenario_ids: list[str] = ["S1"]
    seed: int = 0
    replications: int = Field(default=100, ge=1)
    horizon_days: int = Field(default=365, ge=1)
    staffing_horizon_days: int = Field(default=56, ge=1)
    epsilon: float = Field(default=0.002, gt=0)
    capacity: CapacityBody = CapacityBody()
    cost: CostBody = CostBody()
    pattern: PatternBody = PatternBody()

    @field_validator("kind")
    @classmethod
    def _known_kind(cls, v):
        if v not in ("fit", "simulate", "capacity", "staff", "scenario"):
            raise ValueError(f"unknown run kind {v!r}")
        return v


def _to_run_config(body: RunBody) -> RunConfig:
    return RunConfig.from_dict({
        "cohort_id": body.cohort_id,
        "kind": body.kind,
        "scenario_ids": body.scenario_ids,
        "seed": body.seed,
        "replications": body.replications,
        "horizon_days": body.horizon_days,
        "staffing_horizon_days": body.staffing_horizon_days,
        "epsilon": body.epsilon,
        "capacity": body.capacity.model_dump(),
        "cost": body.cost.model_dump(),
        "pattern": body.pattern.model_dump(),
    })


def create_app(store: RunStore, frontend_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="nhplan", version="0.1.0")

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.post("/cohorts", status_code=201)
    def upload_cohort(body: CohortUpload):
        try:
            store.add_cohort(body.cohort_id, body.csv_text)
        except FileExistsError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except CohortError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"cohort_id": body.cohort_id}

    @app.post("/runs", status_code=202)
    def submit_run(body: RunBody):
        try:
            store.load_cohort(body.cohort_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        try:
            config = _to_run_config(body)
        except (ValueError, CohortError, CapacityError, WorkforceError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        record = store.submit(config)
        return {"run_id": record.run_id, "status": record.status}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        try:
            return store.get(run_id).to_dict()
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.get("/runs/{run_id}/trace")
    def get_trace(run_id: str):
        try:
            record = store.get(run_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        path = store.run_dir(run_id) / "trace.csv"
        if record.status != "done" or not path.exists():
            raise HTTPException(status_code=404,
                                detail=f"run {run_id} has no trace artifact")
        return Response(content=path.read_text(), media_type="text/csv")

    @app.get("/scenarios/compare")
    def compare(ids: str, cohort_id: str, seed: int = 0, replications: int = 100):
        scenario_ids = tuple(s.strip() for s in ids.split(",") if s.strip())
        try:
            cohort = store.load_cohort(cohort_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        try:
            config = RunConfig(cohort_id=cohort_id, scenario_ids=scenario_ids,
                               seed=seed, replications=replications)
            rows = scenario_compare(cohort, scenario_ids, config)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"rows": [
            {"scenario_id": r.scenario_id, "optimal_capacity": r.optimal_capacity,
             "total_labor_cost": r.total_labor_cost,
             "planned_staffing_cost": r.planned_staffing_cost}
            for r in rows]}

    if frontend_dir and Path(frontend_dir).exists():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True),
                  name="dashboard")
    return app
