"""Calibrate the generator's baseline hazard scales.

Solves for the two baseline scales so that, under the default covariate mix
and the uniform one-year observation window, the generated census hits the
documented disposition marginals (61% community, 24% hospital, 15% censored).
Run once; the solved constants are frozen into nhplan.cohort.
"""

import numpy as np
from scipy.optimize import fsolve

from nhplan.cohort import (MarginalSpec, SHORT_STAY_MAX_DAYS, _sample_covariates,
                           default_truth_law)

spec = MarginalSpec()
rng = np.random.default_rng(12345)
X, _, _ = _sample_covariates(spec, 20000, rng)

p_short = spec.short_daily_mean / (spec.short_daily_mean + spec.long_daily_mean)
p_long = 1.0 - p_short

# observation probability for long stays (log-normal, uniform window)
w = np.arange(1, spec.observation_window_days + 1)
from scipy.stats import norm
z = (np.log(w) - spec.long_los_log_mean) / spec.long_los_log_sd
p_obs_long = float(norm.cdf(z).mean())

target_censored = 1.0 - spec.community_fraction - spec.hospital_fraction
cens_short_target = (target_censored - p_long * (1.0 - p_obs_long)) / p_short
comm_split_target = spec.community_fraction / (
    spec.community_fraction + spec.hospital_fraction)

print(f"p_short={p_short:.4f} p_obs_long={p_obs_long:.4f}")
print(f"targets: P(cens|short)={cens_short_target:.4f} "
      f"P(comm|short,obs)={comm_split_target:.4f}")


def stats_for(scales):
    a1, a2 = scales
    law = default_truth_law(a1, a2)
    probs = law.exit_probabilities(X)          # unconditional on <=100
    cond = probs[:, :2] / probs[:, :2].sum(axis=1, keepdims=True)
    # conditional-on-exit-by-100 law per resident: per-day masses
    scores = law.risk_scores(X)
    surv = np.exp(-law.cum_hazards[None, :, :] * scores[:, :, None])
    mass = surv[:, :, :-1] - surv[:, :, 1:]
    s_before = surv[:, :, :-1]
    m_comm = mass[:, 0, :] * s_before[:, 1, :]
    m_hosp = mass[:, 1, :] * (s_before[:, 0, :] - mass[:, 0, :])
    m_any = m_comm + m_hosp                     # P(T=t, cause any), t=1..100
    norm_c = m_any.sum(axis=1, keepdims=True)   # P(T<=100)
    m_any_c = m_any / norm_c
    days = np.arange(1, SHORT_STAY_MAX_DAYS + 1)
    # censoring prob for a stay of t days under the uniform window:
    # P(w < t) = (t-1)/window
    p_cens_given_t = (days - 1) / spec.observation_window_days
    p_cens_short = float((m_any_c * p_cens_given_t).sum(axis=1).mean())
    # community share among observed short exits
    m_comm_c = (m_comm / norm_c)
    m_hosp_c = (m_hosp / norm_c)
    obs_w = 1.0 - p_cens_given_t
    comm_obs = float((m_comm_c * obs_w).sum(axis=1).mean())
    hosp_obs = float((m_hosp_c * obs_w).sum(axis=1).mean())
    comm_split = comm_obs / (comm_obs + hosp_obs)
    mean_t = float((m_any_c * days).sum(axis=1).mean())
    p_exit100 = float(norm_c.mean())
    return p_cens_short, comm_split, mean_t, p_exit100


def residual(scales):
    p_cens, comm_split, _, _ = stats_for(scales)
    return [p_cens - cens_short_target, comm_split - comm_split_target]


solution = fsolve(residual, x0=[0.03, 0.008], full_output=False, xtol=1e-12)
a1, a2 = solution
p_cens, comm_split, mean_t, p_exit = stats_for(solution)
print(f"solved scales: community={a1:.6f} hospital={a2:.6f}")
print(f"achieved: P(cens|short)={p_cens:.4f} comm_split={comm_split:.4f} "
      f"E[T|short]={mean_t:.1f} P(T<=100)={p_exit:.4f}")
print(f"implied marginals: community="
      f"{p_short*(1-p_cens)*comm_split + p_long*p_obs_long*comm_split_target:.4f} "
      f"hospital={p_short*(1-p_cens)*(1-comm_split) + p_long*p_obs_long*(1-comm_split_target):.4f} ")
