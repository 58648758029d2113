"""Decision-support engine for nursing-home resource planning."""

__version__ = "0.1.0"

from .cohort import (Cohort, MarginalSpec, ResidentRecord, ScenarioSpec,
                     STANDARD_SCENARIOS, apply_scenario, generate_synthetic_cohort,
                     ingest_cohort, write_cohort_csv)
from .los import (CompetingRiskModel, LongStayModel, fit_competing_risk,
                  fit_long_stay, kaplan_meier, km_overlay_report)
from .need import HypoExp, NeedGroupTable, RawGroupTable, cluster_groups, cvm_test, jsd
from .pipeline import ModelBundle, fit_models, sample_demand, truth_bundle
from .sim import ArrivalModel, DemandTrace, SimConfig, fit_arrivals, ks_two_sample, run_ensemble, run_replication
from .capacity import CapacityConfig, CapacityResult, acceptance_probability, optimize_capacity
from .workforce import (CostConfig, PatternConfig, PatternMatrix, StaffPlan,
                        evaluate_plan, generate_patterns, solve_saa,
                        value_of_stochastic_solution)

__all__ = [name for name in dir() if not name.startswith("_")]
