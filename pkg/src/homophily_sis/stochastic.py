"""Agent-level SIS Markov chain simulated exactly (Gillespie direct method)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np
from numba import njit

from .core import ModelParams
from .steady_state import solve_steady_state


@njit(cache=True)
def _gillespie(n_a, n_v, vax_a, vax_v, inf_a, inf_v, qa, qv, mu, horizon, burn_in, n_batches, seed):
    np.random.seed(seed)
    t = 0.0
    batch_len = (horizon - burn_in) / n_batches
    acc_a = np.zeros(n_batches)
    acc_v = np.zeros(n_batches)
    extinct_at = -1.0
    while True:
        sus_a = n_a - vax_a - inf_a
        sus_v = n_v - vax_v - inf_v
        share_a = inf_a / n_a
        share_v = inf_v / n_v
        r_inf_a = sus_a * (qa * share_a + (1.0 - qa) * share_v)
        r_inf_v = sus_v * (qv * share_v + (1.0 - qv) * share_a)
        r_rec_a = mu * inf_a
        r_rec_v = mu * inf_v
        total = r_inf_a + r_inf_v + r_rec_a + r_rec_v
        if total <= 0.0:
            dt = horizon - t
            if extinct_at < 0.0:
                extinct_at = t
        else:
            dt = -np.log(1.0 - np.random.random()) / total
        t_next = min(t + dt, horizon)
        # accumulate time-weighted prevalence over the part of [t, t_next] past the burn-in
        lo = max(t, burn_in)
        while lo < t_next:
            b = int((lo - burn_in) / batch_len)
            if b >= n_batches:
                break
            hi = min(t_next, burn_in + (b + 1) * batch_len)
            acc_a[b] += (hi - lo) * inf_a
            acc_v[b] += (hi - lo) * inf_v
            lo = hi
        if t + dt >= horizon:
            break
        t += dt
        u = np.random.random() * total
        if u < r_inf_a:
            inf_a += 1
        elif u < r_inf_a + r_inf_v:
            inf_v += 1
        elif u < r_inf_a + r_inf_v + r_rec_a:
            inf_a -= 1
        else:
            inf_v -= 1
    return acc_a / (batch_len * n_a), acc_v / (batch_len * n_v), extinct_at


@dataclass(frozen=True)
class StochasticRun:
    prevalence_a: float
    prevalence_v: float
    band_a: float  # 95% half-width from batch means
    band_v: float
    extinct: bool
    extinction_time: float
    seed: int

    @property
    def prevalence(self) -> np.ndarray:
        return np.array([self.prevalence_a, self.prevalence_v])


def simulate_sis(params: ModelParams, agents: int = 100_000, horizon: float = 200.0,
                 burn_in: float | None = None, seed: int = 0, initial_fraction: float = 0.01,
                 n_batches: int = 20) -> StochasticRun:
    """One exact run; prevalence is time-averaged over ``[burn_in, horizon]``.

    Group sizes are ``q N`` and ``(1 - q) N``; each group starts with
    ``initial_fraction`` of its unvaccinated members infected.
    """
    if agents < 1000:
        raise ValueError("need at least 1000 agents")
    burn_in = 0.5 * horizon if burn_in is None else burn_in
    if not 0 <= burn_in < horizon:
        raise ValueError("burn_in must lie in [0, horizon)")
    n_a = int(round(params.q * agents))
    n_v = agents - n_a
    vax_a = int(round(params.x_a * n_a))
    vax_v = int(round(params.x_v * n_v))
    inf_a = int(round(initial_fraction * (n_a - vax_a)))
    inf_v = int(round(initial_fraction * (n_v - vax_v)))
    pa, pv, ext = _gillespie(n_a, n_v, vax_a, vax_v, inf_a, inf_v, params.q_a, params.q_v,
                             params.mu, float(horizon), float(burn_in), int(n_batches), int(seed))
    half = lambda b: 1.96 * b.std(ddof=1) / np.sqrt(len(b)) if len(b) > 1 else float("nan")
    return StochasticRun(float(pa.mean()), float(pv.mean()), float(half(pa)), float(half(pv)),
                         ext >= 0.0, float(ext), int(seed))


@dataclass(frozen=True)
class CrossCheck:
    params: ModelParams
    mean_field: np.ndarray
    mean: np.ndarray
    standard_error: np.ndarray
    runs: List[StochasticRun]

    @property
    def z_scores(self) -> np.ndarray:
        se = np.where(self.standard_error > 0, self.standard_error, np.inf)
        return (self.mean - self.mean_field) / se

    @property
    def extinct_fraction(self) -> float:
        return float(np.mean([r.extinct for r in self.runs]))

    def within(self, n_se: float = 3.0) -> bool:
        ok = np.abs(self.mean - self.mean_field) <= n_se * self.standard_error
        exact = self.mean == self.mean_field
        return bool(np.all(ok | exact))


def stochastic_cross_check(params: ModelParams, agents: int = 100_000, horizon: float = 200.0,
                           seed: int = 0, replicates: int = 10, **kw) -> CrossCheck:
    """Independent seeded replicates compared with the mean-field steady state."""
    seeds = np.random.SeedSequence(seed).generate_state(replicates)
    runs = [simulate_sis(params, agents, horizon, seed=int(s), **kw) for s in seeds]
    prev = np.array([r.prevalence for r in runs])
    ss = solve_steady_state(params)
    se = prev.std(axis=0, ddof=1) / np.sqrt(len(runs)) if len(runs) > 1 else np.full(2, np.nan)
    return CrossCheck(params, ss.state.as_array(), prev.mean(axis=0), se, runs)
