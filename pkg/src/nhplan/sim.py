"""Predictive-analytics-integrated demand simulator.

Each replication draws daily short/long arrivals, bootstraps arrival
covariates from the input census, assigns a service-need cluster, draws a
length of stay, admits while beds remain, and accumulates per-resident
hypoexponential staff-minutes into a facility demand trace.

Replications are driven by independent child streams of one seed sequence:
arrivals, covariate resampling, stay lengths and demand each consume their own
substream, so transformations that only change service need (not covariates)
leave the census path bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .los import LongStayModel, sample_long_stays
from .need import NeedGroupTable, classify


class SimError(ValueError):
    pass


class DegenerateSeriesError(SimError):
    pass


# ---------------------------------------------------------------------------
# Arrival input models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArrivalModel:
    """Daily arrival counts: negative binomial short stays, Poisson long stays."""

    nb_r: float
    nb_p: float
    poisson_lam: float

    def __post_init__(self):
        if self.nb_r <= 0 or not (0.0 < self.nb_p <= 1.0):
            raise SimError("negative binomial needs r > 0 and p in (0, 1]")
        if self.poisson_lam < 0:
            raise SimError("Poisson rate must be nonnegative")

    def sample_short(self, days: int, rng: np.random.Generator) -> np.ndarray:
        if self.nb_p >= 1.0:
            return np.zeros(days, dtype=int)
        return rng.negative_binomial(self.nb_r, self.nb_p, size=days)

    def sample_long(self, days: int, rng: np.random.Generator) -> np.ndarray:
        if self.poisson_lam == 0:
            return np.zeros(days, dtype=int)
        return rng.poisson(self.poisson_lam, size=days)


@dataclass(frozen=True)
class ArrivalFit:
    family: str
    params: dict
    chi2_stat: float
    p_value: float


def _chi2_gof(counts: np.ndarray, pmf, n_params: int, min_expected: float = 5.0
              ) -> tuple[float, float]:
    counts = np.asarray(counts, dtype=int)
    n = counts.size
    kmax = int(counts.max())
    ks = np.arange(0, kmax + 1)
    probs = np.array([pmf(k) for k in ks])
    probs = np.append(probs, max(1e-12, 1.0 - probs.sum()))  # tail bin
    observed = np.array([(counts == k).sum() for k in ks] + [(counts > kmax).sum()],
                        dtype=float)
    # pool adjacent bins until every expected count reaches the floor
    while observed.size > 2 and (probs * n).min() < min_expected:
        i = int(np.argmin(probs * n))
        j = i - 1 if i == observed.size - 1 else i + 1
        lo, hi = min(i, j), max(i, j)
        observed = np.concatenate([observed[:lo], [observed[lo] + observed[hi]],
                                   observed[hi + 1:]])
        probs = np.concatenate([probs[:lo], [probs[lo] + probs[hi]], probs[hi + 1:]])
    expected = probs * n
    stat = float(np.sum((observed - expected) ** 2 / expected))
    dof = observed.size - 1 - n_params
    p = float(stats.chi2.sf(stat, dof)) if dof >= 1 else float("nan")
    return stat, p


def fit_arrivals(daily_counts: np.ndarray, family: str) -> ArrivalFit:
    """Maximum-likelihood fit of one arrival family plus a chi-square GOF with
    expected bin counts pooled to at least 5."""
    counts = np.asarray(daily_counts, dtype=int)
    if counts.size < 30:
        raise SimError("need at least 30 daily observations")
    mean = counts.mean()
    if family == "poisson":
        lam = float(mean)
        if lam == 0:
            raise DegenerateSeriesError("all-zero series: Poisson rate 0 is degenerate")
        stat, p = _chi2_gof(counts, lambda k: stats.poisson.pmf(k, lam), 1)
        return ArrivalFit("poisson", {"lam": lam}, stat, p)
    if family == "neg_binomial":
        var = counts.var(ddof=1)
        if var <= mean:
            raise DegenerateSeriesError(
                f"sample variance {var:.3f} <= mean {mean:.3f}: "
                "negative binomial is not identifiable")

        def nll(log_r):
            r = np.exp(log_r)
            p_hat = r / (r + mean)
            return -np.sum(stats.nbinom.logpmf(counts, r, p_hat))

        res = optimize.minimize_scalar(nll, bounds=(-6.0, 8.0), method="bounded",
                                       options={"xatol": 1e-10})
        r = float(np.exp(res.x))
        p_hat = float(r / (r + mean))
        stat, p = _chi2_gof(counts, lambda k: stats.nbinom.pmf(k, r, p_hat), 2)
        return ArrivalFit("neg_binomial", {"r": r, "p": p_hat}, stat, p)
    raise SimError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# Model bundle and configuration
# ---------------------------------------------------------------------------

@dataclass
class ModelBundle:
    """Everything the simulator needs: fitted input models plus the empirical
    covariate pool that arrival characteristics are resampled from."""

    arrivals: ArrivalModel
    short_sampler: object            # exposes sample_short_stays(X, rng)
    long_model: LongStayModel
    need_table: NeedGroupTable
    covariates: np.ndarray           # (pool size, covariate count)
    rehab_idx: np.ndarray
    extensive_idx: np.ndarray
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        adl_col = self.covariate_names.index("adl")
        pool_clusters = np.array([
            classify(self.need_table.classifier, self.covariates[i, adl_col],
                     int(self.rehab_idx[i]), int(self.extensive_idx[i]))
            for i in range(self.covariates.shape[0])
        ], dtype=int)
        means = np.array([[c.distribution.rate1, c.distribution.rate2]
                          for c in self.need_table.clusters])
        self._pool_clusters = pool_clusters
        self._cluster_scales = 1.0 / means  # (n_clusters, 2) mean minutes
        self._pool_scales = self._cluster_scales[pool_clusters - 1]


@dataclass(frozen=True)
class SimConfig:
    capacity: int
    horizon_days: int = 365
    replications: int = 500
    base_seed: int = 0
    warmup_days: int = 0
    initial_census: int = 0

    def __post_init__(self):
        if self.horizon_days <= 0 or self.replications <= 0:
            raise SimError("horizon and replications must be positive")
        if self.capacity < 0 or self.initial_census < 0:
            raise SimError("capacity and initial census must be nonnegative")
        if self.initial_census > self.capacity:
            raise SimError("initial census cannot exceed capacity")
        if self.warmup_days < 0 or self.warmup_days >= self.horizon_days:
            raise SimError("warmup must be shorter than the horizon")


@dataclass
class DemandTrace:
    demand_minutes: np.ndarray
    census: np.ndarray
    arrivals: np.ndarray
    admissions: np.ndarray
    acceptance: np.ndarray

    def validate(self, capacity: int) -> None:
        if np.any(self.census > capacity) or np.any(self.census < 0):
            raise SimError("census out of [0, capacity]")
        if np.any(self.admissions > self.arrivals):
            raise SimError("admissions exceed arrivals")
        if np.any(self.demand_minutes < 0):
            raise SimError("negative demand")
        if np.any((self.census == 0) & (self.demand_minutes > 0)):
            raise SimError("demand recorded with empty facility")

    def mean_acceptance(self, warmup_days: int = 0) -> float:
        return float(self.acceptance[warmup_days:].mean())


def _spawn_streams(stream: np.random.SeedSequence):
    children = stream.spawn(4)
    return tuple(np.random.default_rng(c) for c in children)


def run_replication(bundle: ModelBundle, cfg: SimConfig,
                    stream: np.random.SeedSequence,
                    compute_demand: bool = True) -> DemandTrace:
    """One replication. Deterministic given the seed sequence; covariates,
    stays and demand for every arrival are drawn whether or not the arrival is
    admitted, so runs with different capacities share identical streams."""
    rng_arr, rng_cov, rng_los, rng_dem = _spawn_streams(stream)
    T, kappa = cfg.horizon_days, cfg.capacity
    short_counts = bundle.arrivals.sample_short(T, rng_arr)
    long_counts = bundle.arrivals.sample_long(T, rng_arr)

    n_init = cfg.initial_census
    n_short = int(short_counts.sum())
    n_long = int(long_counts.sum())
    pool_n = bundle.covariates.shape[0]

    # order: initial residents, then short arrivals (by day), then long
    idx_all = rng_cov.integers(0, pool_n, size=n_init + n_short + n_long)
    idx_init, idx_short, idx_long = np.split(idx_all, [n_init, n_init + n_short])

    init_short = np.ones(0, dtype=bool)
    if n_init:
        # initial residents mirror the arrival mix
        total_rate = bundle.arrivals.nb_r * (1 - bundle.arrivals.nb_p) / bundle.arrivals.nb_p \
            + bundle.arrivals.poisson_lam
        p_short = 1.0 if total_rate == 0 else \
            (bundle.arrivals.nb_r * (1 - bundle.arrivals.nb_p) / bundle.arrivals.nb_p) / total_rate
        init_short = rng_cov.uniform(size=n_init) < p_short

    los_init = np.zeros(n_init, dtype=int)
    if n_init:
        if init_short.any():
            los_init[init_short], _ = bundle.short_sampler.sample_short_stays(
                bundle.covariates[idx_init[init_short]], rng_los)
        if (~init_short).any():
            los_init[~init_short] = sample_long_stays(
                bundle.long_model, int((~init_short).sum()), rng_los)
    los_short = np.zeros(n_short, dtype=int)
    if n_short:
        los_short, _ = bundle.short_sampler.sample_short_stays(
            bundle.covariates[idx_short], rng_los)
    los_long = sample_long_stays(bundle.long_model, n_long, rng_los) if n_long else \
        np.zeros(0, dtype=int)

    arrivals = short_counts + long_counts
    admissions = np.zeros(T, dtype=int)
    census = np.zeros(T, dtype=int)
    departures = np.zeros(T + 1, dtype=int)

    adm_start: list[int] = []
    adm_los: list[int] = []
    adm_pool: list[int] = []

    current = 0
    for i in range(n_init):
        current += 1
        adm_start.append(0)
        adm_los.append(int(los_init[i]))
        adm_pool.append(int(idx_init[i]))
        if los_init[i] < T + 1:
            departures[los_init[i]] += 1

    s_ptr = l_ptr = 0
    for t in range(T):
        current -= departures[t]
        taken = 0
        # short arrivals processed before long within a day
        for los_arr, ptr, count in ((los_short, "s", int(short_counts[t])),
                                    (los_long, "l", int(long_counts[t]))):
            for _ in range(count):
                k = s_ptr if ptr == "s" else l_ptr
                if ptr == "s":
                    s_ptr += 1
                else:
                    l_ptr += 1
                if current < kappa:
                    current += 1
                    taken += 1
                    stay = int(los_arr[k])
                    adm_start.append(t)
                    adm_los.append(stay)
                    adm_pool.append(int(idx_short[k]) if ptr == "s" else int(idx_long[k]))
                    end = t + stay
                    if end <= T:
                        departures[end] += 1
        admissions[t] = taken
        census[t] = current

    acceptance = np.where(arrivals > 0, admissions / np.maximum(arrivals, 1), 1.0)

    demand = np.zeros(T)
    if compute_demand and adm_start:
        start = np.asarray(adm_start)
        stay = np.asarray(adm_los)
        end = np.minimum(start + stay, T)
        length = np.maximum(end - start, 0)
        total = int(length.sum())
        if total:
            res_idx = np.repeat(np.arange(start.size), length)
            offsets = np.arange(total) - np.repeat(np.cumsum(length) - length, length)
            days = start[res_idx] + offsets
            scales = bundle._pool_scales[np.asarray(adm_pool)][res_idx]
            minutes = rng_dem.exponential(scales[:, 0]) + rng_dem.exponential(scales[:, 1])
            np.add.at(demand, days, minutes)

    trace = DemandTrace(demand_minutes=demand, census=census.astype(int),
                        arrivals=arrivals.astype(int), admissions=admissions,
                        acceptance=acceptance)
    trace.validate(kappa)
    return trace


@dataclass
class EnsembleSummary:
    mean_census: np.ndarray
    census_lo: np.ndarray
    census_hi: np.ndarray
    mean_demand: np.ndarray
    demand_lo: np.ndarray
    demand_hi: np.ndarray


def run_ensemble(bundle: ModelBundle, cfg: SimConfig, compute_demand: bool = True
                 ) -> tuple[list[DemandTrace], EnsembleSummary]:
    """cfg.replications independent replications from child streams of the
    base seed, with per-day mean and 2.5%/97.5% bands."""
    root = np.random.SeedSequence(np.uint64(cfg.base_seed))
    traces = [run_replication(bundle, cfg, child, compute_demand)
              for child in root.spawn(cfg.replications)]
    census = np.vstack([t.census for t in traces])
    demand = np.vstack([t.demand_minutes for t in traces])
    summary = EnsembleSummary(
        mean_census=census.mean(axis=0),
        census_lo=np.quantile(census, 0.025, axis=0),
        census_hi=np.quantile(census, 0.975, axis=0),
        mean_demand=demand.mean(axis=0),
        demand_lo=np.quantile(demand, 0.025, axis=0),
        demand_hi=np.quantile(demand, 0.975, axis=0),
    )
    return traces, summary


def sample_census(bundle: ModelBundle, capacity: int, sample_days: tuple[int, ...],
                  replications: int, seed: int) -> np.ndarray:
    """Census observations at well-spaced days across independent replications
    (the validation statistic for distribution comparisons; spacing keeps the
    within-run autocorrelation out of the sample)."""
    horizon = max(sample_days) + 1
    cfg = SimConfig(capacity=capacity, horizon_days=horizon,
                    replications=replications, base_seed=seed)
    traces, _ = run_ensemble(bundle, cfg, compute_demand=False)
    return np.concatenate([t.census[list(sample_days)] for t in traces])


def ks_two_sample(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    res = stats.ks_2samp(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return float(res.statistic), float(res.pvalue)


# ---------------------------------------------------------------------------
# Supply / cost reporting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SupplyCostReport:
    staffing_min: float
    staffing_mean: float
    staffing_max: float
    cost_min: float
    cost_mean: float
    cost_max: float
    staffing_lo: float      # ensemble 2.5% bound of daily staffing
    staffing_hi: float
    cost_lo: float
    cost_hi: float


def supply_cost_report(traces: list[DemandTrace],
                       sr_ratio: float | None = None,
                       staff_per_day: np.ndarray | None = None,
                       per_staff_day_cost: float = 88.0) -> SupplyCostReport:
    """Daily staffing level and planned cost under an SR-ratio rule
    (staff = ceil(census / ratio)) or under a fixed per-day staffing plan."""
    if (sr_ratio is None) == (staff_per_day is None):
        raise SimError("provide exactly one of sr_ratio or staff_per_day")
    levels = []
    for t in traces:
        if sr_ratio is not None:
            if sr_ratio <= 0:
                raise SimError("sr_ratio must be positive")
            levels.append(np.ceil(t.census / sr_ratio))
        else:
            plan = np.asarray(staff_per_day, dtype=float)
            if plan.size != t.census.size:
                raise SimError("staffing plan length must match the horizon")
            levels.append(plan)
    staffing = np.concatenate(levels)
    costs = staffing * per_staff_day_cost
    return SupplyCostReport(
        staffing_min=float(staffing.min()), staffing_mean=float(staffing.mean()),
        staffing_max=float(staffing.max()),
        cost_min=float(costs.min()), cost_mean=float(costs.mean()),
        cost_max=float(costs.max()),
        staffing_lo=float(np.quantile(staffing, 0.025)),
        staffing_hi=float(np.quantile(staffing, 0.975)),
        cost_lo=float(np.quantile(costs, 0.025)),
        cost_hi=float(np.quantile(costs, 0.975)),
    )
