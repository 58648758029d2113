"""Competing-risk length-of-stay model.

Per-disposition coefficients are estimated by partial-likelihood maximization
with other-cause exits treated as censoring; the baseline cumulative hazard is
a Breslow-type step function on the whole-day grid. Short-presenting records
(observed time <= 100 days) feed the competing-risk model; longer stays use a
separate log-normal model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy import optimize, stats

from .cohort import SHORT_STAY_MAX_DAYS, Cohort

GRADIENT_TOL = 1e-8
MAX_NEWTON_ITER = 100
DIVERGENT_COEF = 10.0


class FitError(RuntimeError):
    pass


@dataclass
class CoxFit:
    beta: np.ndarray
    se: np.ndarray
    loglik: float
    n_events: int
    iterations: int
    converged: bool
    flagged: np.ndarray            # per-coefficient: divergent / separable
    loglik_path: list[float] = field(default_factory=list)


def _risk_boundaries(times: np.ndarray):
    """Sorted times plus, per unique event day, the first index of its risk set."""
    order = np.argsort(times, kind="stable")
    ts = times[order]
    uniq = np.unique(ts)
    starts = np.searchsorted(ts, uniq, side="left")
    return order, ts, uniq, starts


def _partial_loglik_parts(beta, X, order, ts, uniq, starts, events_sorted):
    """Breslow log partial likelihood with gradient and hessian."""
    n, p = X.shape
    eta = X[order] @ beta
    w = np.exp(eta)
    wx = w[:, None] * X[order]
    wxx = wx[:, :, None] * X[order][:, None, :]
    # reverse cumulative sums; index k gives the sum over sorted positions >= k
    rw = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
    rwx = np.concatenate([np.cumsum(wx[::-1], axis=0)[::-1], np.zeros((1, p))])
    rwxx = np.concatenate([np.cumsum(wxx[::-1], axis=0)[::-1], np.zeros((1, p, p))])

    loglik = 0.0
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    ev_times = ts[events_sorted]
    ev_idx = np.flatnonzero(events_sorted)
    for u, start in zip(uniq, starts):
        here = ev_idx[ev_times == u]
        d = here.size
        if d == 0:
            continue
        s0 = rw[start]
        s1 = rwx[start]
        s2 = rwxx[start]
        xsum = X[order][here].sum(axis=0)
        loglik += float(eta[here].sum() - d * np.log(s0))
        mean1 = s1 / s0
        grad += xsum - d * mean1
        hess -= d * (s2 / s0 - np.outer(mean1, mean1))
    return loglik, grad, hess


def fit_partial_likelihood(times: np.ndarray, events: np.ndarray, X: np.ndarray
                           ) -> CoxFit:
    """Newton iteration with step-halving; accepted steps never decrease the
    partial likelihood. Coefficients that run away (separable data) are
    reported flagged rather than raised."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    X = np.asarray(X, dtype=float)
    if events.sum() < 2:
        raise FitError(f"need at least 2 events, got {int(events.sum())}")
    order, ts, uniq, starts = _risk_boundaries(times)
    events_sorted = events[np.argsort(times, kind="stable")]

    p = X.shape[1]
    beta = np.zeros(p)
    loglik, grad, hess = _partial_loglik_parts(beta, X, order, ts, uniq, starts,
                                               events_sorted)
    path = [loglik]
    converged = np.max(np.abs(grad)) < GRADIENT_TOL
    iterations = 0
    while not converged and iterations < MAX_NEWTON_ITER:
        iterations += 1
        info = -hess
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info, grad, rcond=None)[0]
        scale = 1.0
        for _ in range(40):
            cand = beta + scale * step
            new_loglik, new_grad, new_hess = _partial_loglik_parts(
                cand, X, order, ts, uniq, starts, events_sorted)
            if new_loglik >= loglik - 1e-12:
                break
            scale *= 0.5
        beta, loglik, grad, hess = cand, new_loglik, new_grad, new_hess
        path.append(loglik)
        converged = np.max(np.abs(grad)) < GRADIENT_TOL

    info = -hess
    try:
        cov = np.linalg.inv(info)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        se = np.full(p, np.nan)
    flagged = (np.abs(beta) > DIVERGENT_COEF) | ~np.isfinite(se)
    if not converged:
        flagged |= True
    return CoxFit(beta=beta, se=se, loglik=loglik, n_events=int(events.sum()),
                  iterations=iterations, converged=bool(converged),
                  flagged=flagged, loglik_path=path)


def breslow_baseline(times: np.ndarray, events: np.ndarray, X: np.ndarray,
                     beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative-hazard step function: jump d_t / sum_{j in risk set} exp(b.x_j)
    at each observed event day. Returns (event days, cumulative hazard)."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    order, ts, uniq, starts = _risk_boundaries(times)
    w = np.exp(X[order] @ beta)
    rw = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
    ev_sorted = events[np.argsort(times, kind="stable")]
    ev_times = ts[ev_sorted]
    days, increments = [], []
    for u, start in zip(uniq, starts):
        d = int((ev_times == u).sum())
        if d == 0:
            continue
        days.append(u)
        increments.append(d / rw[start])
    days = np.asarray(days, dtype=float)
    cum = np.cumsum(np.asarray(increments, dtype=float))
    return days, cum


@dataclass(frozen=True)
class LosDraw:
    los_days: int
    disposition: str


@dataclass
class CompetingRiskModel:
    dispositions: tuple[str, ...]
    covariate_names: tuple[str, ...]
    coefficients: dict[str, np.ndarray]
    baseline_days: dict[str, np.ndarray]
    baseline_cumhaz: dict[str, np.ndarray]
    max_support_day: int = SHORT_STAY_MAX_DAYS
    fits: dict[str, CoxFit] = field(default_factory=dict)

    def cumulative_hazard(self, disposition: str, t: np.ndarray) -> np.ndarray:
        days = self.baseline_days[disposition]
        cum = self.baseline_cumhaz[disposition]
        idx = np.searchsorted(days, np.asarray(t, dtype=float), side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)

    @property
    def hazard_grid(self) -> np.ndarray:
        """(M, max_support_day) cumulative baseline hazards at days 1..grid end."""
        grid = np.arange(1, self.max_support_day + 1)
        return np.vstack([self.cumulative_hazard(m, grid) for m in self.dispositions])

    def coefficient_matrix(self) -> np.ndarray:
        return np.vstack([self.coefficients[m] for m in self.dispositions])

    def sample_short_stays(self, X: np.ndarray, rng: np.random.Generator
                           ) -> tuple[np.ndarray, np.ndarray]:
        """Vector draw: invert each cause-specific survival on the day grid and
        keep the earliest cause. Draws with no exit by the grid end are
        truncated there with the cause whose latent (tail-extended) time is
        smallest."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        grid = self.hazard_grid                     # (M, T)
        risk = np.exp(X @ self.coefficient_matrix().T)   # (n, M)
        cum = grid[None, :, :] * risk[:, :, None]   # (n, M, T)
        surv = np.exp(-cum)
        u = rng.uniform(size=(n, len(self.dispositions)))
        fired = surv <= u[:, :, None]
        latent = np.where(fired.any(axis=2), fired.argmax(axis=2) + 1.0, np.inf)
        los = latent.min(axis=1)
        cause = latent.argmin(axis=1)
        none_fired = ~np.isfinite(los)
        if none_fired.any():
            total = cum[none_fired, :, -1]
            rate = (total + 1e-12) / self.max_support_day
            residual = (-np.log(u[none_fired]) - total) / rate
            cause[none_fired] = residual.argmin(axis=1)
            los[none_fired] = self.max_support_day
        return los.astype(int), cause

    def sample_short_stay(self, x: np.ndarray, rng: np.random.Generator) -> LosDraw:
        los, cause = self.sample_short_stays(np.atleast_2d(x), rng)
        return LosDraw(int(los[0]), self.dispositions[int(cause[0])])


def short_stay_arrays(cohort: Cohort):
    """(times, labels, X) for records presenting as short stays; label is the
    disposition name or None when censored."""
    rows = [r for r in cohort.residents
            if r.los_days is not None and r.los_days <= SHORT_STAY_MAX_DAYS]
    times = np.array([r.los_days for r in rows], dtype=float)
    labels = [None if r.disposition == "censored" else r.disposition for r in rows]
    X = np.array([r.covariates for r in rows], dtype=float).reshape(len(rows), -1)
    return times, labels, X


def long_stay_arrays(cohort: Cohort):
    rows = [r for r in cohort.residents
            if r.los_days is not None and r.los_days > SHORT_STAY_MAX_DAYS]
    times = np.array([r.los_days for r in rows], dtype=float)
    observed = np.array([r.disposition != "censored" for r in rows], dtype=bool)
    return times, observed


def fit_coefficients(cohort: Cohort, disposition: str) -> CoxFit:
    """Disposition-specific partial-likelihood fit; exits to any other
    disposition enter as censoring."""
    times, labels, X = short_stay_arrays(cohort)
    events = np.array([lab == disposition for lab in labels], dtype=bool)
    return fit_partial_likelihood(times, events, X)


def fit_baseline(cohort: Cohort, disposition: str, beta: np.ndarray):
    times, labels, X = short_stay_arrays(cohort)
    events = np.array([lab == disposition for lab in labels], dtype=bool)
    return breslow_baseline(times, events, X, beta)


def fit_competing_risk(cohort: Cohort,
                       dispositions: tuple[str, ...] = ("community", "hospital")
                       ) -> CompetingRiskModel:
    coefficients, days, cums, fits = {}, {}, {}, {}
    for m in dispositions:
        fit = fit_coefficients(cohort, m)
        coefficients[m] = fit.beta
        fits[m] = fit
        d, c = fit_baseline(cohort, m, fit.beta)
        days[m], cums[m] = d, c
    return CompetingRiskModel(
        dispositions=tuple(dispositions), covariate_names=cohort.covariate_names,
        coefficients=coefficients, baseline_days=days, baseline_cumhaz=cums,
        fits=fits)


def fit_pooled_exit_model(cohort: Cohort) -> CompetingRiskModel:
    """The no-competing-risk comparison variant: one exit cause fitted on every
    record's observed time as if it were a complete stay (dispositions, the
    short/long split and right-censoring all ignored). This is the
    conventional one-distribution stay model, and it underestimates stays
    because year-long censored residents enter as finished ones."""
    rows = [r for r in cohort.residents if r.los_days is not None]
    times = np.array([r.los_days for r in rows], dtype=float)
    X = np.array([r.covariates for r in rows], dtype=float).reshape(len(rows), -1)
    events = np.ones(len(times), dtype=bool)
    fit = fit_partial_likelihood(times, events, X)
    d, c = breslow_baseline(times, events, X, fit.beta)
    return CompetingRiskModel(
        dispositions=("exit",), covariate_names=cohort.covariate_names,
        coefficients={"exit": fit.beta}, baseline_days={"exit": d},
        baseline_cumhaz={"exit": c}, fits={"exit": fit},
        max_support_day=int(times.max()))


# ---------------------------------------------------------------------------
# Likelihood bookkeeping (decomposition identity)
# ---------------------------------------------------------------------------

def _baseline_jump(model: CompetingRiskModel, m: str, t: float) -> float:
    days = model.baseline_days[m]
    idx = np.searchsorted(days, t)
    if idx >= days.size or days[idx] != t:
        return 0.0
    cum = model.baseline_cumhaz[m]
    return float(cum[idx] - (cum[idx - 1] if idx else 0.0))


def disposition_log_likelihood(model: CompetingRiskModel, m: str,
                               times: np.ndarray, labels: list, X: np.ndarray) -> float:
    """Full-likelihood contribution owned by cause m: its event terms plus its
    share of every resident's survival integral."""
    beta = model.coefficients[m]
    eta = X @ beta
    total = -float(np.sum(model.cumulative_hazard(m, times) * np.exp(eta)))
    for i, lab in enumerate(labels):
        if lab == m:
            jump = _baseline_jump(model, m, float(times[i]))
            total += float(np.log(jump) + eta[i])
    return total


def total_log_likelihood(model: CompetingRiskModel,
                         times: np.ndarray, labels: list, X: np.ndarray) -> float:
    """Joint log-likelihood over all causes; algebraically the sum of the
    per-disposition terms."""
    total = 0.0
    for i, lab in enumerate(labels):
        t = float(times[i])
        for m in model.dispositions:
            total -= float(model.cumulative_hazard(m, [t])[0]
                           * np.exp(X[i] @ model.coefficients[m]))
        if lab is not None:
            jump = _baseline_jump(model, lab, t)
            total += float(np.log(jump) + X[i] @ model.coefficients[lab])
    return total


# ---------------------------------------------------------------------------
# Long-stay model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LongStayModel:
    log_mean: float
    log_sd: float

    def __post_init__(self):
        if self.log_sd <= 0:
            raise ValueError("log_sd must be positive")


def sample_long_stays(model: LongStayModel, n: int, rng: np.random.Generator
                      ) -> np.ndarray:
    draws = rng.lognormal(model.log_mean, model.log_sd, size=n)
    return np.maximum(np.ceil(draws).astype(int), SHORT_STAY_MAX_DAYS + 1)


def sample_long_stay(model: LongStayModel, rng: np.random.Generator) -> int:
    return int(sample_long_stays(model, 1, rng)[0])


def fit_long_stay(times: np.ndarray, observed: np.ndarray) -> LongStayModel:
    """Censored log-normal MLE for long-stay durations."""
    times = np.asarray(times, dtype=float)
    observed = np.asarray(observed, dtype=bool)
    if observed.sum() < 2:
        raise FitError("need at least 2 observed long stays")
    logs = np.log(times)

    def nll(params):
        mu, log_sigma = params
        sigma = np.exp(log_sigma)
        z = (logs - mu) / sigma
        ll = np.sum(stats.norm.logpdf(z[observed]) - np.log(sigma) - logs[observed])
        ll += np.sum(stats.norm.logsf(z[~observed]))
        return -ll

    start = np.array([logs[observed].mean(), np.log(logs[observed].std() + 1e-3)])
    res = optimize.minimize(nll, start, method="Nelder-Mead",
                            options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 2000})
    mu, log_sigma = res.x
    return LongStayModel(log_mean=float(mu), log_sd=float(np.exp(log_sigma)))


def long_stay_gof(model: LongStayModel, times: np.ndarray, observed: np.ndarray,
                  window_days: int = 365, min_expected: float = 5.0):
    """Chi-square goodness of fit for observed long-stay exits, with expected
    bin masses adjusted for the uniform observation-window censoring."""
    times = np.asarray(times, dtype=float)
    observed = np.asarray(observed, dtype=bool)
    obs = np.sort(times[observed])
    n = obs.size
    if n < 10:
        raise FitError("too few observed long stays for a GOF test")
    k = max(3, min(8, n // 5))
    edges = np.quantile(obs, np.linspace(0, 1, k + 1))
    edges[0], edges[-1] = SHORT_STAY_MAX_DAYS, max(edges[-1], obs[-1]) + 1

    def mass_observed_below(t):
        # P(T <= min(t, w)) integrated over w ~ U{1..window}
        w = np.arange(1, window_days + 1, dtype=float)
        caps = np.minimum(t, w)
        z = (np.log(np.maximum(caps, 1e-9)) - model.log_mean) / model.log_sd
        return float(np.mean(stats.norm.cdf(z)))

    cdf_vals = np.array([mass_observed_below(t) for t in edges])
    probs = np.diff(cdf_vals)
    probs = np.clip(probs, 1e-12, None)
    probs = probs / probs.sum()
    counts, _ = np.histogram(obs, bins=edges)

    # pool sparse bins from the right
    while counts.size > 2 and (probs * n).min() < min_expected:
        i = int(np.argmin(probs * n))
        j = i - 1 if i == counts.size - 1 else i + 1
        lo, hi = min(i, j), max(i, j)
        counts = np.concatenate([counts[:lo], [counts[lo] + counts[hi]], counts[hi + 1:]])
        probs = np.concatenate([probs[:lo], [probs[lo] + probs[hi]], probs[hi + 1:]])
    expected = probs * n
    stat = float(np.sum((counts - expected) ** 2 / expected))
    dof = max(1, counts.size - 1 - 2)
    p = float(stats.chi2.sf(stat, dof))
    return stat, p


# ---------------------------------------------------------------------------
# Kaplan-Meier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KMCurve:
    times: np.ndarray      # jump locations
    survival: np.ndarray   # value on [times[i], times[i+1])

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        vals = np.concatenate([[1.0], self.survival])
        return vals[idx]


def kaplan_meier(times: np.ndarray, events: np.ndarray) -> KMCurve:
    """Product-limit estimator; right-continuous with S(0) = 1."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    if times.size == 0:
        raise ValueError("empty sample")
    if np.any(times <= 0):
        raise ValueError("times must be positive")
    order = np.argsort(times, kind="stable")
    ts, ev = times[order], events[order]
    uniq = np.unique(ts[ev]) if ev.any() else np.array([])
    n_at_risk = ts.size - np.searchsorted(ts, uniq, side="left")
    deaths = np.array([(ts[ev] == u).sum() for u in uniq])
    surv = np.cumprod(1.0 - deaths / n_at_risk) if uniq.size else np.array([])
    return KMCurve(times=uniq, survival=surv)


@dataclass(frozen=True)
class KMOverlay:
    grid: np.ndarray
    model_survival: np.ndarray
    observed_survival: np.ndarray
    sup_distance: float


def km_overlay_report(model_los: np.ndarray,
                      observed_times: np.ndarray, observed_events: np.ndarray
                      ) -> KMOverlay:
    """Both KM curves on a common day grid plus their sup distance."""
    km_model = kaplan_meier(np.asarray(model_los, dtype=float),
                            np.ones(len(model_los), dtype=bool))
    km_obs = kaplan_meier(observed_times, observed_events)
    top = int(max(np.max(model_los), np.max(observed_times)))
    grid = np.arange(0, top + 1, dtype=float)
    a = km_model.evaluate(grid)
    b = km_obs.evaluate(grid)
    return KMOverlay(grid=grid, model_survival=a, observed_survival=b,
                     sup_distance=float(np.max(np.abs(a - b))))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def model_to_doc(model: CompetingRiskModel) -> dict:
    return {
        "covariate_names": list(model.covariate_names),
        "max_support_day": model.max_support_day,
        "dispositions": [
            {
                "name": m,
                "coefficients": [float(v) for v in model.coefficients[m]],
                "baseline": [
                    [float(d), float(c - (model.baseline_cumhaz[m][i - 1] if i else 0.0))]
                    for i, (d, c) in enumerate(zip(model.baseline_days[m],
                                                   model.baseline_cumhaz[m]))
                ],
            }
            for m in model.dispositions
        ],
    }


def model_from_doc(doc: dict) -> CompetingRiskModel:
    dispositions = tuple(entry["name"] for entry in doc["dispositions"])
    coefficients, days, cums = {}, {}, {}
    for entry in doc["dispositions"]:
        m = entry["name"]
        coefficients[m] = np.asarray(entry["coefficients"], dtype=float)
        jumps = np.asarray(entry["baseline"], dtype=float).reshape(-1, 2)
        days[m] = jumps[:, 0]
        cums[m] = np.cumsum(jumps[:, 1])
    return CompetingRiskModel(
        dispositions=dispositions,
        covariate_names=tuple(doc["covariate_names"]),
        coefficients=coefficients, baseline_days=days, baseline_cumhaz=cums,
        max_support_day=int(doc["max_support_day"]))


def save_model(model: CompetingRiskModel, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(model_to_doc(model), sort_keys=False))


def load_model(path: str | Path) -> CompetingRiskModel:
    return model_from_doc(yaml.safe_load(Path(path).read_text()))
