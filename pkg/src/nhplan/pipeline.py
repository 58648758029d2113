"""Fit the full input-model bundle from a cohort, and sampling helpers shared
by the planners and the service layer."""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace

import numpy as np

from . import cohort as cohort_mod
from .cohort import Cohort, EXTENSIVE_LEVELS, REHAB_LEVELS, MarginalSpec
from .los import (LongStayModel, fit_competing_risk, fit_long_stay,
                  fit_pooled_exit_model, long_stay_arrays)
from .need import NeedGroupTable, RawGroupTable, cluster_groups, default_raw_group_table
from .sim import (ArrivalModel, DegenerateSeriesError, ModelBundle, SimConfig,
                  fit_arrivals, run_ensemble)


def _pool_arrays(cohort: Cohort):
    rehab = np.array([REHAB_LEVELS.index(r.rehab_level) for r in cohort.residents])
    ext = np.array([EXTENSIVE_LEVELS.index(r.extensive_care_level)
                    for r in cohort.residents])
    return cohort.covariate_matrix, rehab, ext


def fit_arrival_model(cohort: Cohort, observation_window_days: int = 365
                      ) -> ArrivalModel:
    """NB fit on short-stay daily counts and Poisson on long-stay counts.

    Stay-class labels are right-truncated: a long stayer censored before day
    100 presents as a short-class record, so raw class counts undercount long
    arrivals by the window factor P(residual window > 100). Both rates are
    moment-corrected for that relabeling. A series too equidispersed for the
    NB collapses to its near-Poisson limit.
    """
    from .cohort import SHORT_STAY_MAX_DAYS
    short_counts = cohort.daily_admission_counts("short")
    long_counts = cohort.daily_admission_counts("long")
    days = max(len(short_counts), len(long_counts), 1)
    w = observation_window_days
    p_long_visible = (w - SHORT_STAY_MAX_DAYS) / w
    lam = float(long_counts.sum()) / days / p_long_visible if long_counts.size else 0.0
    short_mean = max(0.0, float(short_counts.sum()) / days
                     - lam * SHORT_STAY_MAX_DAYS / w)
    try:
        nb = fit_arrivals(short_counts, "neg_binomial")
        nb_r = nb.params["r"]
    except DegenerateSeriesError:
        nb_r = 1e6
    nb_p = nb_r / (nb_r + short_mean) if short_mean > 0 else 1.0
    return ArrivalModel(nb_r=nb_r, nb_p=nb_p, poisson_lam=lam)


def fit_models(cohort: Cohort, raw_table: RawGroupTable | None = None,
               epsilon: float = 0.002,
               need_table: NeedGroupTable | None = None) -> ModelBundle:
    """Fit every simulator input from one cohort: arrival counts, the
    competing-risk short-stay model, the censored log-normal long-stay model
    and the clustered need-group table."""
    arrivals = fit_arrival_model(cohort)
    short_model = fit_competing_risk(cohort)
    times, observed = long_stay_arrays(cohort)
    if observed.sum() >= 2:
        long_model = fit_long_stay(times, observed)
    else:
        long_model = LongStayModel(log_mean=MarginalSpec().long_los_log_mean,
                                   log_sd=MarginalSpec().long_los_log_sd)
    table = need_table or cluster_groups(raw_table or default_raw_group_table(),
                                         epsilon)
    cov, rehab, ext = _pool_arrays(cohort)
    return ModelBundle(arrivals=arrivals, short_sampler=short_model,
                       long_model=long_model, need_table=table,
                       covariates=cov, rehab_idx=rehab, extensive_idx=ext,
                       covariate_names=cohort.covariate_names)


def fit_pooled_exit_bundle(cohort: Cohort, reference: ModelBundle) -> ModelBundle:
    """The no-competing-risk comparison bundle: every arrival's stay comes from
    the pooled single-cause model (no short/long split), at the reference's
    total arrival rate."""
    arr = reference.arrivals
    short_mean = arr.nb_r * (1 - arr.nb_p) / arr.nb_p if arr.nb_p < 1 else 0.0
    total_mean = short_mean + arr.poisson_lam
    nb_p = arr.nb_r / (arr.nb_r + total_mean) if total_mean > 0 else 1.0
    return dc_replace(reference,
                      arrivals=ArrivalModel(nb_r=arr.nb_r, nb_p=nb_p, poisson_lam=0.0),
                      short_sampler=fit_pooled_exit_model(cohort))


class TruthShortSampler:
    """Adapter giving the synthetic generator's discharge law the simulator's
    sampler interface."""

    def __init__(self, law: cohort_mod.TruthLosLaw | None = None):
        self.law = law or cohort_mod.default_truth_law()

    def sample_short_stays(self, X: np.ndarray, rng: np.random.Generator):
        return self.law.sample_conditional(np.atleast_2d(X), rng)


def truth_bundle(cohort: Cohort, marginals: MarginalSpec | None = None,
                 need_table: NeedGroupTable | None = None) -> ModelBundle:
    """Bundle built from the generator's own law (not refitted): the oracle
    side of simulator-validation comparisons. The covariate pool is shared with
    the cohort so the comparison isolates the stay model."""
    spec = marginals or MarginalSpec()
    r = spec.short_nb_dispersion
    arrivals = ArrivalModel(
        nb_r=r, nb_p=r / (r + spec.short_daily_mean),
        poisson_lam=spec.long_daily_mean)
    long_model = LongStayModel(log_mean=spec.long_los_log_mean,
                               log_sd=spec.long_los_log_sd)
    table = need_table or cluster_groups(default_raw_group_table(), 0.002)
    cov, rehab, ext = _pool_arrays(cohort)
    return ModelBundle(arrivals=arrivals, short_sampler=TruthShortSampler(),
                       long_model=long_model, need_table=table,
                       covariates=cov, rehab_idx=rehab, extensive_idx=ext,
                       covariate_names=cohort.covariate_names)


def rebundle_with_cohort(bundle: ModelBundle, cohort: Cohort) -> ModelBundle:
    """Swap the covariate pool for a transformed census, keeping the fitted
    models (what-if scenarios change who arrives, not the fitted laws)."""
    cov, rehab, ext = _pool_arrays(cohort)
    return ModelBundle(arrivals=bundle.arrivals, short_sampler=bundle.short_sampler,
                       long_model=bundle.long_model, need_table=bundle.need_table,
                       covariates=cov, rehab_idx=rehab, extensive_idx=ext,
                       covariate_names=cohort.covariate_names)


@dataclass(frozen=True)
class DemandSample:
    demand: np.ndarray   # (n, horizon) staff-minutes
    census: np.ndarray   # (n, horizon)


def sample_demand(bundle: ModelBundle, capacity: int, horizon_days: int,
                  n_samples: int, seed: int, lead_days: int = 309) -> DemandSample:
    """Demand scenarios for workforce planning: the last ``horizon_days`` of
    ``lead_days + horizon_days``-day replications, so the tactical window sees
    an operating facility rather than an empty one."""
    cfg = SimConfig(capacity=capacity, horizon_days=lead_days + horizon_days,
                    replications=n_samples, base_seed=seed)
    traces, _ = run_ensemble(bundle, cfg)
    demand = np.vstack([t.demand_minutes[lead_days:] for t in traces])
    census = np.vstack([t.census[lead_days:] for t in traces])
    return DemandSample(demand=demand, census=census)
