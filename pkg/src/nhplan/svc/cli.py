"""Command-line entry points for the fit / simulate / capacity / staff /
scenario workflows, plus the HTTP server."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from ..capacity import CapacityConfig, optimize_capacity
from ..cohort import generate_synthetic_cohort, ingest_cohort, write_cohort_csv
from ..los import model_to_doc
from ..pipeline import fit_models, sample_demand
from ..sim import SimConfig, run_ensemble
from ..workforce import CostConfig, PatternConfig, generate_patterns, solve_saa
from .runs import (RunConfig, RunStore, scenario_compare, write_comparison_csv,
                   write_trace_csv)


def _fail(message: str, code: int = 1):
    click.echo(json.dumps({"error": message}), err=True)
    sys.exit(code)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    return yaml.safe_load(Path(path).read_text()) or {}


@click.group()
def main():
    """Nursing-home resource planning toolkit."""


@main.command()
@click.option("--cohort", "cohort_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--epsilon", default=0.002, show_default=True,
              help="within-cluster divergence tolerance for need groups")
def fit(cohort_path, out_dir, epsilon):
    """Fit all input models from a resident CSV and write model documents."""
    try:
        cohort = ingest_cohort(cohort_path)
        bundle = fit_models(cohort, epsilon=epsilon)
    except Exception as exc:
        _fail(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "stay_model.yaml").write_text(
        yaml.safe_dump(model_to_doc(bundle.short_sampler), sort_keys=False))
    summary = {
        "residents": len(cohort),
        "arrivals": {"nb_r": bundle.arrivals.nb_r, "nb_p": bundle.arrivals.nb_p,
                     "poisson_lam": bundle.arrivals.poisson_lam},
        "long_stay": {"log_mean": bundle.long_model.log_mean,
                      "log_sd": bundle.long_model.log_sd},
        "need_clusters": bundle.need_table.n_clusters,
        "coefficients": {
            m: {name: round(float(v), 6)
                for name, v in zip(cohort.covariate_names,
                                   bundle.short_sampler.coefficients[m])}
            for m in bundle.short_sampler.dispositions},
    }
    (out / "fit_summary.yaml").write_text(yaml.safe_dump(summary, sort_keys=False))
    click.echo(yaml.safe_dump(summary, sort_keys=False))


@main.command()
@click.option("--n", default=677, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def synth(n, seed, out_path):
    """Generate a synthetic cohort CSV."""
    try:
        cohort = generate_synthetic_cohort(n, seed=seed)
    except Exception as exc:
        _fail(str(exc))
    write_cohort_csv(cohort, out_path)
    click.echo(f"wrote {len(cohort)} residents to {out_path}")


@main.command()
@click.option("--cohort", "cohort_path", required=True, type=click.Path(exists=True))
@click.option("--capacity", "kappa", required=True, type=int)
@click.option("--horizon", default=365, show_default=True)
@click.option("--replications", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def simulate(cohort_path, kappa, horizon, replications, seed, out_path):
    """Simulate facility demand and write the first replication's trace CSV."""
    try:
        bundle = fit_models(ingest_cohort(cohort_path))
        cfg = SimConfig(capacity=kappa, horizon_days=horizon,
                        replications=replications, base_seed=seed)
        traces, summary = run_ensemble(bundle, cfg)
    except Exception as exc:
        _fail(str(exc))
    write_trace_csv(traces[0], Path(out_path))
    click.echo(f"mean census {summary.mean_census.mean():.1f}, "
               f"mean demand {summary.mean_demand.mean():.0f} min/day; "
               f"trace written to {out_path}")


@main.command()
@click.option("--cohort", "cohort_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="YAML file with CapacityConfig keys")
@click.option("--replications", default=None, type=int)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path())
def capacity(cohort_path, config_path, replications, seed, out_path):
    """Search for the minimum bed capacity meeting the service criterion."""
    try:
        overrides = _load_config_file(config_path)
        if replications is not None:
            overrides["replications"] = replications
        overrides.setdefault("base_seed", seed)
        cfg = CapacityConfig(**overrides)
        bundle = fit_models(ingest_cohort(cohort_path))
        result = optimize_capacity(bundle, cfg)
    except Exception as exc:
        _fail(str(exc))
    doc = {"capacity": result.kappa, "loop_capacity": result.loop_kappa,
           "iterations": result.iterations, "converged": result.converged,
           "certified_minimal": result.certified_minimal,
           "history": [[int(k), float(p)] for k, p in result.history]}
    if out_path:
        Path(out_path).write_text(yaml.safe_dump(doc, sort_keys=False))
    click.echo(yaml.safe_dump(doc, sort_keys=False))


@main.command()
@click.option("--cohort", "cohort_path", required=True, type=click.Path(exists=True))
@click.option("--capacity", "kappa", required=True, type=int)
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="YAML file with cost / pattern keys")
@click.option("--horizon", default=56, show_default=True)
@click.option("--samples", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path())
def staff(cohort_path, kappa, config_path, horizon, samples, seed, out_path):
    """Solve the staffing/scheduling program for a fixed capacity."""
    try:
        overrides = _load_config_file(config_path)
        cost = CostConfig(**overrides.get("cost", {}), saa_samples=samples) \
            if "saa_samples" not in overrides.get("cost", {}) else \
            CostConfig(**overrides["cost"])
        pattern_kw = overrides.get("pattern", {})
        for key in ("parttime_day_options", "weekend_day_indices"):
            if key in pattern_kw:
                pattern_kw[key] = tuple(pattern_kw[key])
        pattern = PatternConfig(**pattern_kw)
        bundle = fit_models(ingest_cohort(cohort_path))
        patterns = generate_patterns(pattern, horizon, cost.per_staff_day_cost)
        demand = sample_demand(bundle, kappa, horizon, cost.saa_samples, seed=seed)
        plan = solve_saa(patterns, demand.demand, cost)
    except Exception as exc:
        _fail(str(exc))
    doc = {"objective": round(plan.objective, 2),
           "planned_cost": round(plan.breakdown.planned, 2),
           "understaffing_cost": round(plan.breakdown.understaffing, 2),
           "overstaffing_cost": round(plan.breakdown.overstaffing, 2),
           "total_hires": int(plan.x.sum()),
           "certificate": plan.certificate}
    if out_path:
        Path(out_path).write_text(yaml.safe_dump(doc, sort_keys=False))
    click.echo(yaml.safe_dump(doc, sort_keys=False))


@main.group()
def scenario():
    """What-if census composition workflows."""


@scenario.command("run")
@click.option("--cohort", "cohort_path", required=True, type=click.Path(exists=True))
@click.option("--scenarios", default="S1,S2,S3,S4,S5,S6", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--replications", default=100, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path())
def scenario_run(cohort_path, scenarios, seed, replications, config_path, out_path):
    """Optimize capacity and staffing for each scenario and tabulate costs."""
    try:
        cohort = ingest_cohort(cohort_path)
        ids = tuple(s.strip() for s in scenarios.split(",") if s.strip())
        overrides = _load_config_file(config_path)
        config = RunConfig.from_dict({
            "cohort_id": Path(cohort_path).stem, "kind": "scenario",
            "scenario_ids": list(ids), "seed": seed,
            "replications": replications, **overrides})
        rows = scenario_compare(cohort, ids, config)
    except Exception as exc:
        _fail(str(exc))
    if out_path:
        write_comparison_csv(rows, Path(out_path))
    header = f"{'scenario':>8} {'capacity':>8} {'total_cost':>12} {'planned_cost':>12}"
    click.echo(header)
    for r in rows:
        click.echo(f"{r.scenario_id:>8} {r.optimal_capacity:>8} "
                   f"{r.total_labor_cost:>12.2f} {r.planned_staffing_cost:>12.2f}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True, envvar="NHPLAN_PORT")
@click.option("--data-dir", default="./nhplan_runs", show_default=True,
              envvar="NHPLAN_DATA_DIR")
def serve(host, port, data_dir):
    """Serve the HTTP API (and the dashboard, when built)."""
    import uvicorn

    from .api import create_app
    app = create_app(RunStore(data_dir))
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
