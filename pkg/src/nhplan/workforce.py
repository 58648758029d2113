"""Phase-two planner: scheduling-pattern generation, the sample-average
staffing program, cost decomposition, strategy comparison and the value of
the stochastic solution.

The staffing objective is c.x plus the expected understaffing penalty
c_u * E[sum_t (xi_t - s_t)^+] plus the overstaffing penalty
c_v * E[sum_t (s_t - xi_t)^+] with supply s_t = K * sum_i A_it x_i; the
expectation is replaced by the average over sampled demand traces and the
integer program is solved exactly (branch and bound on the linearized
formulation) whenever the solver proves a zero gap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse


class WorkforceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Pattern generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PatternConfig:
    template_days: int = 14
    fulltime_days: int = 10
    parttime_day_options: tuple[int, ...] = (4, 6)
    weekend_cap: int = 2
    parttime_biweekly_cap: int = 8
    weekend_day_indices: tuple[int, ...] = (6, 7, 13, 14)

    def __post_init__(self):
        if self.template_days < 1:
            raise WorkforceError("template must have at least one day")
        if self.fulltime_days > self.template_days:
            raise WorkforceError("full-time days cannot exceed the template length")
        if self.weekend_cap < 0 or self.parttime_biweekly_cap < 0:
            raise WorkforceError("caps must be nonnegative")
        if any(not (1 <= d <= self.template_days) for d in self.weekend_day_indices):
            raise WorkforceError("weekend day indices must lie within the template")
        if self.fulltime_days in self.parttime_day_options:
            raise WorkforceError(
                "part-time day options must differ from the full-time day count "
                "(identical day subsets would duplicate patterns)")


def _pattngen(start_day: int, chosen: list[int], out: list[tuple[int, ...]],
              target_days: int, template_days: int, weekend: frozenset[int],
              weekend_cap: int, biweekly_cap: int, parttime: bool) -> None:
    """Depth-first enumeration of strictly increasing working-day subsets,
    pruned by the weekend cap and (for part-time) the bi-weekly cap."""
    if len(chosen) == target_days:
        out.append(tuple(chosen))
        return
    for day in range(start_day, template_days + 1):
        weekend_days = sum(1 for d in chosen if d in weekend) + (day in weekend)
        if weekend_days > weekend_cap:
            continue
        if parttime:
            block = (day - 1) // 14
            in_block = sum(1 for d in chosen if (d - 1) // 14 == block) + 1
            if in_block > biweekly_cap:
                continue
        chosen.append(day)
        _pattngen(day + 1, chosen, out, target_days, template_days, weekend,
                  weekend_cap, biweekly_cap, parttime)
        chosen.pop()


@dataclass
class PatternMatrix:
    A: np.ndarray                 # (P, horizon) binary
    template: np.ndarray          # (P, template_days) binary
    costs: np.ndarray             # (P,) dollars over the horizon
    kinds: tuple[str, ...]        # fulltime / parttime
    subsets: tuple[tuple[int, ...], ...]
    template_days: int

    @property
    def n_patterns(self) -> int:
        return self.A.shape[0]

    @property
    def horizon_days(self) -> int:
        return self.A.shape[1]


def enumerate_patterns(cfg: PatternConfig) -> list[tuple[str, tuple[int, ...]]]:
    """All feasible (kind, day-subset) templates: the full-time set once, then
    one part-time set per allowed day count."""
    weekend = frozenset(cfg.weekend_day_indices)
    out: list[tuple[str, tuple[int, ...]]] = []
    ft: list[tuple[int, ...]] = []
    _pattngen(1, [], ft, cfg.fulltime_days, cfg.template_days, weekend,
              cfg.weekend_cap, cfg.parttime_biweekly_cap, parttime=False)
    out.extend(("fulltime", s) for s in ft)
    for beta in cfg.parttime_day_options:
        if beta > cfg.template_days:
            continue
        pt: list[tuple[int, ...]] = []
        _pattngen(1, [], pt, beta, cfg.template_days, weekend,
                  cfg.weekend_cap, cfg.parttime_biweekly_cap, parttime=True)
        out.extend(("parttime", s) for s in pt)
    out.sort(key=lambda item: item[1])
    return out


def generate_patterns(cfg: PatternConfig, horizon_days: int = 56,
                      per_staff_day_cost: float = 88.0) -> PatternMatrix:
    """Binary pattern matrix tiled over the planning horizon, ordered
    lexicographically by working-day subset; pattern cost is the per-staff-day
    cost times the days actually worked in the horizon."""
    if horizon_days < 1:
        raise WorkforceError("horizon must be positive")
    entries = enumerate_patterns(cfg)
    P = len(entries)
    template = np.zeros((P, cfg.template_days), dtype=np.int8)
    for i, (_, subset) in enumerate(entries):
        for d in subset:
            template[i, d - 1] = 1
    tiles = horizon_days // cfg.template_days + 1
    A = np.tile(template, (1, tiles))[:, :horizon_days]
    costs = per_staff_day_cost * A.sum(axis=1).astype(float)
    return PatternMatrix(A=A, template=template, costs=costs,
                         kinds=tuple(kind for kind, _ in entries),
                         subsets=tuple(subset for _, subset in entries),
                         template_days=cfg.template_days)


# ---------------------------------------------------------------------------
# Costs and plan evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostConfig:
    per_staff_day_cost: float = 88.0
    k_minutes: float = 480.0
    understaffing_cost: float = 0.30    # dollars per unmet staff-minute
    overstaffing_cost: float = 0.05     # dollars per idle supplied minute
    saa_samples: int = 100

    def __post_init__(self):
        planned_per_minute = self.per_staff_day_cost / self.k_minutes
        if not (self.understaffing_cost > planned_per_minute
                > self.overstaffing_cost >= 0.0):
            raise WorkforceError(
                "need understaffing cost > planned cost per minute > "
                "overstaffing cost >= 0; anything else degenerates to "
                "all-agency or all-overstaffed plans")
        if self.saa_samples < 1:
            raise WorkforceError("sample count must be >= 1")


@dataclass(frozen=True)
class CostBreakdown:
    planned: float
    understaffing: float
    overstaffing: float

    @property
    def total(self) -> float:
        return self.planned + self.understaffing + self.overstaffing


def supply_minutes(x: np.ndarray, patterns: PatternMatrix, cost: CostConfig
                   ) -> np.ndarray:
    return cost.k_minutes * (np.asarray(x, dtype=float) @ patterns.A)


def evaluate_supply(supply: np.ndarray, planned: float, demand: np.ndarray,
                    cost: CostConfig) -> CostBreakdown:
    demand = np.atleast_2d(np.asarray(demand, dtype=float))
    gap = demand - supply[None, :]
    under = cost.understaffing_cost * float(np.clip(gap, 0.0, None).sum(axis=1).mean())
    over = cost.overstaffing_cost * float(np.clip(-gap, 0.0, None).sum(axis=1).mean())
    return CostBreakdown(planned=planned, understaffing=under, overstaffing=over)


def evaluate_plan(x: np.ndarray, patterns: PatternMatrix, demand: np.ndarray,
                  cost: CostConfig) -> CostBreakdown:
    """Sample-average cost decomposition; planned + penalties reproduce the
    solver objective exactly."""
    x = np.asarray(x, dtype=float)
    planned = float(patterns.costs @ x)
    return evaluate_supply(supply_minutes(x, patterns, cost), planned, demand, cost)


# ---------------------------------------------------------------------------
# SAA solve
# ---------------------------------------------------------------------------

@dataclass
class StaffPlan:
    x: np.ndarray
    supply: np.ndarray
    breakdown: CostBreakdown
    objective: float
    certificate: str           # "optimal" or "heuristic"
    mip_gap: float

    @property
    def planned_cost(self) -> float:
        return self.breakdown.planned


def _solve_milp(patterns: PatternMatrix, demand: np.ndarray, cost: CostConfig,
                staff_bound: int, extra_obj_cap: float | None = None,
                lex_stage: int | None = None, lex_fixed: np.ndarray | None = None):
    """Linearized exact formulation. Variables: x (P integers), sigma
    (template-day staff counts), u (per-sample-day unmet minutes). Returns the
    scipy result."""
    n, T = demand.shape
    P = patterns.n_patterns
    D = patterns.template_days
    day_slot = np.arange(T) % D

    c_u, c_v, K = cost.understaffing_cost, cost.overstaffing_cost, cost.k_minutes
    slot_weight = np.bincount(day_slot, minlength=D).astype(float)

    n_var = P + D + n * T
    obj = np.concatenate([
        patterns.costs,
        c_v * K * slot_weight,
        np.full(n * T, (c_u + c_v) / n),
    ])

    # sigma_d - sum_i template_id x_i = 0
    eq = sparse.hstack([
        sparse.csr_matrix(-patterns.template.T.astype(float)),
        sparse.eye(D, format="csr"),
        sparse.csr_matrix((D, n * T)),
    ], format="csr")
    # u_jt + K sigma_{d(t)} >= xi_jt
    rows = np.arange(n * T)
    sig_cols = P + np.tile(day_slot, n)
    u_cols = P + D + rows
    data = np.concatenate([np.full(n * T, K), np.ones(n * T)])
    ub = sparse.csr_matrix(
        (data, (np.concatenate([rows, rows]), np.concatenate([sig_cols, u_cols]))),
        shape=(n * T, n_var))

    constraints = [
        optimize.LinearConstraint(eq, 0.0, 0.0),
        optimize.LinearConstraint(ub, demand.reshape(-1), np.inf),
    ]
    if extra_obj_cap is not None:
        constraints.append(optimize.LinearConstraint(
            sparse.csr_matrix(obj), -np.inf, extra_obj_cap))

    lower = np.zeros(n_var)
    upper = np.concatenate([np.full(P, float(staff_bound)),
                            np.full(D + n * T, np.inf)])
    if lex_fixed is not None:
        for i, v in enumerate(lex_fixed):
            if v >= 0:
                lower[i] = upper[i] = float(v)

    if lex_stage is not None:
        sense_obj = np.zeros(n_var)
        sense_obj[lex_stage] = 1.0
    else:
        sense_obj = obj

    integrality = np.concatenate([np.ones(P), np.zeros(D + n * T)])
    res = optimize.milp(c=sense_obj, constraints=constraints,
                        integrality=integrality,
                        bounds=optimize.Bounds(lower, upper),
                        options={"mip_rel_gap": 0.0})
    return res, obj


LEXICOGRAPHIC_MAX_PATTERNS = 16


def solve_saa(patterns: PatternMatrix, demand: np.ndarray, cost: CostConfig
              ) -> StaffPlan:
    """Minimize the sample-average staffing loss over nonnegative integer
    hires per pattern. Small instances are additionally refined to the
    lexicographically smallest optimal vector so results are reproducible."""
    demand = np.atleast_2d(np.asarray(demand, dtype=float))
    if demand.size == 0:
        raise WorkforceError("demand sample set is empty")
    n, T = demand.shape
    if T != patterns.horizon_days:
        raise WorkforceError(
            f"demand horizon {T} != pattern horizon {patterns.horizon_days}")

    P = patterns.n_patterns
    if P == 0 or demand.max() <= 0.0:
        x = np.zeros(P, dtype=int)
        breakdown = evaluate_plan(x, patterns, demand, cost)
        return StaffPlan(x=x, supply=supply_minutes(x, patterns, cost),
                         breakdown=breakdown, objective=breakdown.total,
                         certificate="optimal", mip_gap=0.0)

    staff_bound = int(np.ceil(demand.max() / cost.k_minutes))
    res, obj = _solve_milp(patterns, demand, cost, staff_bound)
    if res.status != 0 or res.x is None:
        raise WorkforceError(f"solver failed: {res.message}")
    gap = float(getattr(res, "mip_gap", 0.0) or 0.0)
    certificate = "optimal" if gap <= 1e-9 else "heuristic"
    x = np.rint(res.x[:P]).astype(int)

    if P <= LEXICOGRAPHIC_MAX_PATTERNS and certificate == "optimal":
        cap = float(res.fun) + 1e-7 * max(1.0, abs(float(res.fun)))
        fixed = -np.ones(P)
        for i in range(P):
            sub, _ = _solve_milp(patterns, demand, cost, staff_bound,
                                 extra_obj_cap=cap, lex_stage=i, lex_fixed=fixed)
            if sub.status != 0 or sub.x is None:
                break
            fixed[i] = float(np.rint(sub.x[i]))
        if np.all(fixed >= 0):
            x = fixed.astype(int)

    breakdown = evaluate_plan(x, patterns, demand, cost)
    return StaffPlan(x=x, supply=supply_minutes(x, patterns, cost),
                     breakdown=breakdown, objective=breakdown.total,
                     certificate=certificate, mip_gap=gap)


def value_of_stochastic_solution(patterns: PatternMatrix, demand: np.ndarray,
                                 cost: CostConfig, tol: float = 1e-6) -> float:
    """Solve against the per-day mean demand, evaluate that plan on the full
    sample set, and subtract the stochastic optimum. Tiny negative values
    within solver tolerance clamp to zero."""
    demand = np.atleast_2d(np.asarray(demand, dtype=float))
    stochastic = solve_saa(patterns, demand, cost)
    deterministic = solve_saa(patterns, demand.mean(axis=0, keepdims=True), cost)
    det_cost = evaluate_plan(deterministic.x, patterns, demand, cost).total
    vss = det_cost - stochastic.objective
    if vss < -tol:
        raise WorkforceError(f"negative VSS beyond tolerance: {vss}")
    return max(vss, 0.0)


# ---------------------------------------------------------------------------
# Staffing strategy comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StrategyOutcome:
    label: str
    description: str
    breakdown: CostBreakdown

    @property
    def total(self) -> float:
        return self.breakdown.total


def _sr_staff_levels(census: np.ndarray, ratio: float) -> np.ndarray:
    return np.ceil(census.mean(axis=0) / ratio)


def _covering_plan(patterns: PatternMatrix, required: np.ndarray,
                   cost: CostConfig) -> np.ndarray:
    """Minimum-cost hires whose daily coverage meets the required staff levels."""
    P = patterns.n_patterns
    if required.max() <= 0:
        return np.zeros(P, dtype=int)
    bound = int(required.max())
    cover = sparse.csr_matrix(patterns.A.astype(float))
    res = optimize.milp(
        c=patterns.costs,
        constraints=[optimize.LinearConstraint(cover.T, required, np.inf)],
        integrality=np.ones(P),
        bounds=optimize.Bounds(np.zeros(P), np.full(P, float(bound))),
        options={"mip_rel_gap": 0.0})
    if res.status != 0 or res.x is None:
        raise WorkforceError(f"covering solve failed: {res.message}")
    return np.rint(res.x).astype(int)


def compare_staffing_strategies(demand: np.ndarray, census: np.ndarray,
                                patterns: PatternMatrix, cost: CostConfig,
                                facility_ratio: float = 3.5,
                                state_ratio: float = 6.5,
                                misspec_demand: np.ndarray | None = None
                                ) -> dict[str, StrategyOutcome]:
    """Evaluate the proposed plan against the six comparison strategies on one
    shared demand sample set: SR-ratio staffing with and without patterns at
    facility and state ratios, need-based planning on the no-competing-risk
    demand model, and need-based deterministic (mean-demand) planning."""
    demand = np.atleast_2d(np.asarray(demand, dtype=float))
    census = np.atleast_2d(np.asarray(census, dtype=float))
    outcomes: dict[str, StrategyOutcome] = {}

    for label, ratio, desc in (("M1", facility_ratio, "facility SR ratio, no patterns"),
                               ("M2", state_ratio, "state SR ratio, no patterns")):
        staff = _sr_staff_levels(census, ratio)
        planned = float(cost.per_staff_day_cost * staff.sum())
        breakdown = evaluate_supply(cost.k_minutes * staff, planned, demand, cost)
        outcomes[label] = StrategyOutcome(label, desc, breakdown)

    for label, ratio, desc in (("M3", facility_ratio, "facility SR ratio with patterns"),
                               ("M4", state_ratio, "state SR ratio with patterns")):
        required = _sr_staff_levels(census, ratio)
        x = _covering_plan(patterns, required, cost)
        outcomes[label] = StrategyOutcome(label, desc,
                                          evaluate_plan(x, patterns, demand, cost))

    if misspec_demand is not None:
        plan5 = solve_saa(patterns, np.atleast_2d(misspec_demand), cost)
        outcomes["M5"] = StrategyOutcome(
            "M5", "need-based, no competing-risk stay model",
            evaluate_plan(plan5.x, patterns, demand, cost))

    det = solve_saa(patterns, demand.mean(axis=0, keepdims=True), cost)
    outcomes["M6"] = StrategyOutcome(
        "M6", "need-based deterministic (mean demand)",
        evaluate_plan(det.x, patterns, demand, cost))

    proposed = solve_saa(patterns, demand, cost)
    outcomes["proposed"] = StrategyOutcome(
        "proposed", "need-based stochastic staffing and scheduling",
        proposed.breakdown)
    return outcomes
