"""Phase-one planner: heuristic search for the smallest bed capacity whose
mean daily acceptance clears the service criterion with the required
probability.

The search follows the increase-only update kappa <- ceil(kappa + zeta*(eta-p))
with zeta <- 0.5*kappa, evaluated on common random numbers across candidate
capacities; an optional downward sweep afterwards certifies minimality on
fresh seeds (the raw loop only proves feasibility of its final iterate).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sim import ModelBundle, SimConfig, run_replication


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class CapacityConfig:
    kappa0: int | None = None          # None: offered-load start
    tau_c: float = 0.85
    eta: float = 0.95
    max_iterations: int = 500
    replications: int = 500
    horizon_days: int = 365
    minimality_sweep: bool = True
    base_seed: int = 0
    warmup_days: int = 0

    def __post_init__(self):
        if not (0.0 < self.tau_c <= 1.0) or not (0.0 < self.eta <= 1.0):
            raise CapacityError("tau_c and eta must be in (0, 1]")
        if self.max_iterations < 1 or self.replications < 1 or self.horizon_days < 1:
            raise CapacityError("iteration, replication and horizon counts must be >= 1")
        if self.kappa0 is not None and self.kappa0 < 1:
            raise CapacityError("kappa0 must be a positive integer")


@dataclass
class CapacityResult:
    kappa: int
    loop_kappa: int
    iterations: int
    history: list[tuple[int, float]]
    converged: bool
    certified_minimal: bool
    acceptance_by_kappa: dict[int, float] = field(default_factory=dict)


def _as_simulator(models):
    """Accept a ModelBundle or any callable (kappa, stream) -> DemandTrace."""
    if isinstance(models, ModelBundle):
        def simulate(kappa: int, stream: np.random.SeedSequence, horizon: int):
            cfg = SimConfig(capacity=kappa, horizon_days=horizon, replications=1)
            return run_replication(models, cfg, stream, compute_demand=False)
        return simulate

    def simulate(kappa: int, stream: np.random.SeedSequence, horizon: int):
        return models(kappa, stream, horizon)
    return simulate


def acceptance_probability(models, kappa: int, replications: int,
                           horizon_days: int, seed: int,
                           tau_c: float = 0.85, warmup_days: int = 0
                           ) -> tuple[float, np.ndarray]:
    """Empirical Pr(mean daily acceptance >= tau_c) plus the per-replication
    means. The same seed reuses identical streams, giving common random
    numbers across capacities."""
    simulate = _as_simulator(models)
    root = np.random.SeedSequence(np.uint64(seed))
    means = np.empty(replications)
    for j, child in enumerate(root.spawn(replications)):
        trace = simulate(kappa, child, horizon_days)
        means[j] = trace.mean_acceptance(warmup_days)
    p = float(np.mean(means >= tau_c))
    return p, means


def offered_load_start(bundle: ModelBundle, horizon_days: int) -> int:
    """ceil(arrival rate x mean stay), a deliberate underestimate so the
    increase-only loop starts below the target."""
    arr = bundle.arrivals
    short_rate = arr.nb_r * (1 - arr.nb_p) / arr.nb_p if arr.nb_p < 1 else 0.0
    X = bundle.covariates
    if X.shape[0] > 500:
        X = X[:: X.shape[0] // 500 + 1]
    sampler = bundle.short_sampler
    if hasattr(sampler, "hazard_grid"):
        grid = sampler.hazard_grid
        risk = np.exp(X @ sampler.coefficient_matrix().T)
        total = (grid[None, :, :] * risk[:, :, None]).sum(axis=1)
        surv = np.exp(-total)
        mean_short = 1.0 + float(surv[:, :-1].sum(axis=1).mean())
    else:
        rng = np.random.default_rng(0)
        los, _ = sampler.sample_short_stays(X, rng)
        mean_short = float(np.mean(los))
    mu, sd = bundle.long_model.log_mean, bundle.long_model.log_sd
    from scipy.stats import norm
    a = float(horizon_days)
    below = np.exp(mu + sd**2 / 2) * norm.cdf((np.log(a) - mu - sd**2) / sd)
    mean_long = float(below + a * norm.sf((np.log(a) - mu) / sd))
    load = short_rate * mean_short + arr.poisson_lam * mean_long
    return max(1, int(np.ceil(load)))


def optimize_capacity(models, cfg: CapacityConfig) -> CapacityResult:
    """Algorithm-faithful search, then (optionally) decrement while the chance
    constraint still holds on fresh seeds to certify minimality."""
    if isinstance(models, ModelBundle):
        kappa = cfg.kappa0 if cfg.kappa0 is not None else \
            offered_load_start(models, cfg.horizon_days)
    else:
        if cfg.kappa0 is None:
            raise CapacityError("kappa0 required for a bare simulator")
        kappa = cfg.kappa0

    history: list[tuple[int, float]] = []
    converged = False
    m = 1
    while m <= cfg.max_iterations:
        p, _ = acceptance_probability(models, kappa, cfg.replications,
                                      cfg.horizon_days, cfg.base_seed,
                                      cfg.tau_c, cfg.warmup_days)
        history.append((kappa, p))
        if p >= cfg.eta:
            converged = True
            break
        zeta = 0.5 * kappa
        new_kappa = int(np.ceil(kappa + zeta * (cfg.eta - p)))
        if new_kappa <= kappa:   # ceil guarantees progress; guard regardless
            new_kappa = kappa + 1
        kappa = new_kappa
        m += 1

    loop_kappa = kappa
    certified = False
    if converged and cfg.minimality_sweep:
        sweep_seed = cfg.base_seed + 1
        while kappa > 1:
            p, _ = acceptance_probability(models, kappa - 1, cfg.replications,
                                          cfg.horizon_days, sweep_seed,
                                          cfg.tau_c, cfg.warmup_days)
            if p >= cfg.eta:
                kappa -= 1
                sweep_seed += 1
            else:
                break
        # certify the final capacity on yet another fresh seed set
        p, _ = acceptance_probability(models, kappa, cfg.replications,
                                      cfg.horizon_days, sweep_seed + 1,
                                      cfg.tau_c, cfg.warmup_days)
        certified = p >= cfg.eta
        if not certified and kappa < loop_kappa:
            kappa = loop_kappa
    return CapacityResult(kappa=kappa, loop_kappa=loop_kappa,
                          iterations=len(history), history=history,
                          converged=converged, certified_minimal=certified)


@dataclass(frozen=True)
class StrategyRow:
    label: str
    kappa: int
    mean_acceptance: float
    mean_occupancy: float


def compare_capacity_strategies(models, strategies: dict[str, int],
                                cfg: CapacityConfig) -> list[StrategyRow]:
    """Evaluate fixed capacity strategies on a common replication ensemble
    (same seeds for every kappa)."""
    simulate = _as_simulator(models)
    rows = []
    for label, kappa in strategies.items():
        root = np.random.SeedSequence(np.uint64(cfg.base_seed))
        acc, occ = [], []
        for child in root.spawn(cfg.replications):
            trace = simulate(kappa, child, cfg.horizon_days)
            acc.append(trace.mean_acceptance(cfg.warmup_days))
            occ.append(float(trace.census[cfg.warmup_days:].mean()) / kappa)
        rows.append(StrategyRow(label=label, kappa=kappa,
                                mean_acceptance=float(np.mean(acc)),
                                mean_occupancy=float(np.mean(occ))))
    return rows
