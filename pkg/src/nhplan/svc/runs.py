"""Run orchestration and flat-file persistence.

A run is one fit/simulate/plan workflow executed from a config snapshot.
Artifacts live in a per-run directory; results are staged in a scratch
subdirectory and moved into place only on success, so a failed run leaves
status=failed and no result documents.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import shutil
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..capacity import CapacityConfig, optimize_capacity
from ..cohort import Cohort, ScenarioSpec, STANDARD_SCENARIOS, apply_scenario, ingest_cohort
from ..need import default_raw_group_table, cluster_groups
from ..pipeline import ModelBundle, fit_models, rebundle_with_cohort, sample_demand
from ..sim import DemandTrace, SimConfig, run_ensemble
from ..workforce import CostConfig, PatternConfig, generate_patterns, solve_saa


@dataclass
class RunRecord:
    run_id: str
    created_at: str
    request: dict
    status: str = "queued"           # queued -> running -> done | failed
    error: str | None = None
    result: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RunConfig:
    """Snapshot sufficient to reproduce a run bit-for-bit."""

    cohort_id: str
    kind: str = "scenario"                 # fit | simulate | capacity | staff | scenario
    scenario_ids: tuple[str, ...] = ("S1",)
    seed: int = 0
    replications: int = 100
    horizon_days: int = 365
    capacity: CapacityConfig = field(default_factory=lambda: CapacityConfig())
    cost: CostConfig = field(default_factory=CostConfig)
    pattern: PatternConfig = field(default_factory=PatternConfig)
    staffing_horizon_days: int = 56
    epsilon: float = 0.002

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenario_ids"] = list(self.scenario_ids)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        for key, ctor in (("capacity", CapacityConfig), ("cost", CostConfig),
                          ("pattern", PatternConfig)):
            if key in doc and isinstance(doc[key], dict):
                sub = dict(doc[key])
                for tup_key in ("parttime_day_options", "weekend_day_indices"):
                    if tup_key in sub:
                        sub[tup_key] = tuple(sub[tup_key])
                doc[key] = ctor(**sub)
        if "scenario_ids" in doc:
            doc["scenario_ids"] = tuple(doc["scenario_ids"])
        return cls(**doc)


def scenario_from_id(scenario_id: str) -> ScenarioSpec:
    try:
        return STANDARD_SCENARIOS[scenario_id]
    except KeyError:
        raise ValueError(f"unknown scenario id {scenario_id!r}; "
                         f"known: {sorted(STANDARD_SCENARIOS)}") from None


@dataclass(frozen=True)
class ScenarioRow:
    scenario_id: str
    optimal_capacity: int
    total_labor_cost: float
    planned_staffing_cost: float


def scenario_compare(cohort: Cohort, scenario_ids: tuple[str, ...],
                     config: RunConfig) -> list[ScenarioRow]:
    """Apply each census transformation, re-plan capacity and staffing, and
    tabulate (capacity, total labor cost, planned staffing cost). Every
    scenario runs from the same master seed so compositions that leave the
    stay process untouched reproduce the baseline capacity exactly."""
    baseline_bundle = fit_models(cohort, epsilon=config.epsilon)
    rows = []
    for sid in scenario_ids:
        spec = scenario_from_id(sid)
        transformed = apply_scenario(cohort, spec, seed=config.seed)
        bundle = rebundle_with_cohort(baseline_bundle, transformed)
        cap_cfg = CapacityConfig(
            kappa0=config.capacity.kappa0, tau_c=config.capacity.tau_c,
            eta=config.capacity.eta, max_iterations=config.capacity.max_iterations,
            replications=config.replications, horizon_days=config.horizon_days,
            minimality_sweep=config.capacity.minimality_sweep,
            base_seed=config.seed)
        cap = optimize_capacity(bundle, cap_cfg)
        patterns = generate_patterns(config.pattern, config.staffing_horizon_days,
                                     config.cost.per_staff_day_cost)
        demand = sample_demand(bundle, cap.kappa, config.staffing_horizon_days,
                               config.cost.saa_samples, seed=config.seed)
        plan = solve_saa(patterns, demand.demand, config.cost)
        rows.append(ScenarioRow(
            scenario_id=sid, optimal_capacity=cap.kappa,
            total_labor_cost=round(plan.objective, 2),
            planned_staffing_cost=round(plan.planned_cost, 2)))
    return rows


class RunStore:
    """Per-run directory of flat files under a root; thread-safe, with one
    worker executing runs asynchronously."""

    def __init__(self, root: str | Path, max_workers: int = 2):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "cohorts").mkdir(exist_ok=True)
        (self.root / "runs").mkdir(exist_ok=True)
        self._lock = threading.Lock()
        self._records: dict[str, RunRecord] = {}
        self._pool = ThreadPoolExecutor(max_workers=max_workers)
        self._load_existing()

    # -- cohorts ------------------------------------------------------------

    def cohort_path(self, cohort_id: str) -> Path:
        return self.root / "cohorts" / f"{cohort_id}.csv"

    def add_cohort(self, cohort_id: str, csv_text: str) -> str:
        path = self.cohort_path(cohort_id)
        with self._lock:
            if path.exists():
                raise FileExistsError(f"cohort {cohort_id!r} already uploaded")
            path.write_text(csv_text, encoding="utf-8")
        try:
            ingest_cohort(path)
        except Exception:
            path.unlink(missing_ok=True)
            raise
        return cohort_id

    def load_cohort(self, cohort_id: str) -> Cohort:
        path = self.cohort_path(cohort_id)
        if not path.exists():
            raise KeyError(f"unknown cohort {cohort_id!r}")
        return ingest_cohort(path)

    # -- runs ---------------------------------------------------------------

    def _load_existing(self):
        for run_dir in (self.root / "runs").iterdir() if (self.root / "runs").exists() else []:
            record_file = run_dir / "record.json"
            if record_file.exists():
                doc = json.loads(record_file.read_text())
                self._records[doc["run_id"]] = RunRecord(**doc)

    def run_dir(self, run_id: str) -> Path:
        return self.root / "runs" / run_id

    def get(self, run_id: str) -> RunRecord:
        with self._lock:
            if run_id not in self._records:
                raise KeyError(f"unknown run {run_id!r}")
            return self._records[run_id]

    def _persist(self, record: RunRecord):
        run_dir = self.run_dir(record.run_id)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "record.json").write_text(json.dumps(record.to_dict(), indent=2))

    def submit(self, config: RunConfig, execute_async: bool = True) -> RunRecord:
        run_id = uuid.uuid4().hex[:12]
        record = RunRecord(run_id=run_id,
                           created_at=_dt.datetime.now(_dt.timezone.utc).isoformat(),
                           request=config.to_dict())
        with self._lock:
            self._records[run_id] = record
        run_dir = self.run_dir(run_id)
        run_dir.mkdir(parents=True)
        (run_dir / "config.yaml").write_text(yaml.safe_dump(config.to_dict(),
                                                            sort_keys=False))
        self._persist(record)
        if execute_async:
            self._pool.submit(self.execute, run_id)
        else:
            self.execute(run_id)
        return record

    def _set_status(self, run_id: str, status: str, error: str | None = None,
                    result: dict | None = None):
        with self._lock:
            rec = self._records[run_id]
            rec.status = status
            rec.error = error
            if result is not None:
                rec.result = result
        self._persist(rec)

    def execute(self, run_id: str) -> RunRecord:
        record = self.get(run_id)
        config = RunConfig.from_dict(record.request)
        run_dir = self.run_dir(run_id)
        scratch = run_dir / ".scratch"
        try:
            self._set_status(run_id, "running")
            scratch.mkdir(exist_ok=True)
            result = self._execute_config(config, scratch)
            for item in scratch.iterdir():
                shutil.move(str(item), run_dir / item.name)
            scratch.rmdir()
            self._set_status(run_id, "done", result=result)
        except Exception as exc:   # noqa: BLE001 - surfaced in the record
            shutil.rmtree(scratch, ignore_errors=True)
            self._set_status(run_id, "failed", error=f"{type(exc).__name__}: {exc}")
        return self.get(run_id)

    def _execute_config(self, config: RunConfig, outdir: Path) -> dict:
        cohort = self.load_cohort(config.cohort_id)
        if config.kind == "scenario":
            rows = scenario_compare(cohort, config.scenario_ids, config)
            write_comparison_csv(rows, outdir / "comparison.csv")
            return {"comparison": [asdict(r) for r in rows]}
        if config.kind == "capacity":
            bundle = fit_models(cohort, epsilon=config.epsilon)
            cap_cfg = CapacityConfig(
                kappa0=config.capacity.kappa0, tau_c=config.capacity.tau_c,
                eta=config.capacity.eta,
                max_iterations=config.capacity.max_iterations,
                replications=config.replications,
                horizon_days=config.horizon_days,
                minimality_sweep=config.capacity.minimality_sweep,
                base_seed=config.seed)
            cap = optimize_capacity(bundle, cap_cfg)
            with (outdir / "iterations.csv").open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["kappa", "probability"])
                writer.writerows(cap.history)
            return {"capacity": cap.kappa, "loop_capacity": cap.loop_kappa,
                    "iterations": cap.iterations, "converged": cap.converged,
                    "certified_minimal": cap.certified_minimal}
        if config.kind == "simulate":
            bundle = fit_models(cohort, epsilon=config.epsilon)
            kappa = config.capacity.kappa0 or 10_000
            cfg = SimConfig(capacity=kappa, horizon_days=config.horizon_days,
                            replications=config.replications,
                            base_seed=config.seed)
            traces, summary = run_ensemble(bundle, cfg)
            write_trace_csv(traces[0], outdir / "trace.csv")
            return {
                "mean_census": [round(float(v), 3) for v in summary.mean_census],
                "census_lo": [round(float(v), 3) for v in summary.census_lo],
                "census_hi": [round(float(v), 3) for v in summary.census_hi],
                "mean_demand": [round(float(v), 1) for v in summary.mean_demand],
                "demand_lo": [round(float(v), 1) for v in summary.demand_lo],
                "demand_hi": [round(float(v), 1) for v in summary.demand_hi],
            }
        if config.kind == "staff":
            bundle = fit_models(cohort, epsilon=config.epsilon)
            kappa = config.capacity.kappa0 or 10_000
            patterns = generate_patterns(config.pattern, config.staffing_horizon_days,
                                         config.cost.per_staff_day_cost)
            demand = sample_demand(bundle, kappa, config.staffing_horizon_days,
                                   config.cost.saa_samples, seed=config.seed)
            plan = solve_saa(patterns, demand.demand, config.cost)
            hires = {str(patterns.subsets[i]): int(v)
                     for i, v in enumerate(plan.x) if v > 0}
            doc = {
                "objective": round(plan.objective, 2),
                "planned_cost": round(plan.breakdown.planned, 2),
                "understaffing_cost": round(plan.breakdown.understaffing, 2),
                "overstaffing_cost": round(plan.breakdown.overstaffing, 2),
                "certificate": plan.certificate,
                "total_hires": int(plan.x.sum()),
                "hires": hires,
                "supply_minutes": [float(v) for v in plan.supply],
            }
            (outdir / "plan.yaml").write_text(yaml.safe_dump(doc, sort_keys=False))
            return doc
        raise ValueError(f"unknown run kind {config.kind!r}")


def write_trace_csv(trace: DemandTrace, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "demand_minutes", "census", "arrivals",
                         "admissions", "acceptance"])
        for t in range(len(trace.census)):
            writer.writerow([t, round(float(trace.demand_minutes[t]), 3),
                             int(trace.census[t]), int(trace.arrivals[t]),
                             int(trace.admissions[t]),
                             round(float(trace.acceptance[t]), 6)])


def write_comparison_csv(rows: list[ScenarioRow], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario_id", "optimal_capacity", "total_labor_cost",
                         "planned_staffing_cost"])
        for r in rows:
            writer.writerow([r.scenario_id, r.optimal_capacity,
                             r.total_labor_cost, r.planned_staffing_cost])
