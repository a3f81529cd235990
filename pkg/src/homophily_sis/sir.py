"""SIR variant: forward dynamics, final size and its response to homophily.

Recovered agents become immune, so the long-run prevalence is zero and the
cumulative (undiscounted) infection ``CI_g = (R_g - x_g) / mu`` is the
relevant summary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .core import IntegrationError, ModelParams


@dataclass(frozen=True)
class SirState:
    rho_a: float
    rho_v: float
    R_a: float
    R_v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rho_a, self.rho_v, self.R_a, self.R_v])


def _seeds(params: ModelParams, seed: float) -> np.ndarray:
    return np.minimum(seed, np.array([1.0 - params.x_a, 1.0 - params.x_v]))


def initial_sir_state(params: ModelParams, seed: float) -> SirState:
    sa, sv = _seeds(params, seed)
    return SirState(float(sa), float(sv), params.x_a, params.x_v)


def rhs_sir(params: ModelParams, state: SirState) -> np.ndarray:
    """Rates ``(d rho_a, d R_a, d rho_v, d R_v)``."""
    qa, qv, mu = params.q_a, params.q_v, params.mu
    ra, rv, Ra, Rv = state.rho_a, state.rho_v, state.R_a, state.R_v
    ta = qa * ra + (1 - qa) * rv
    tv = qv * rv + (1 - qv) * ra
    return np.array([ta * (1 - Ra - ra) - mu * ra, mu * ra,
                     tv * (1 - Rv - rv) - mu * rv, mu * rv])


@dataclass(frozen=True)
class SirTrajectory:
    t: np.ndarray
    y: np.ndarray  # columns rho_a, rho_v, R_a, R_v
    params: ModelParams

    @property
    def final(self) -> SirState:
        return SirState(*map(float, self.y[-1]))


def integrate_sir(params: ModelParams, seed: float = 1e-6, tolerance: float = 1e-11,
                  stop_below: float = 1e-12, horizon: float | None = None) -> SirTrajectory:
    """Run the epidemic until total infection falls below ``stop_below`` or ``t = 1e4 / mu``."""
    horizon = 1e4 / params.mu if horizon is None else horizon
    qa, qv, mu = params.q_a, params.q_v, params.mu
    s = _seeds(params, seed)

    def f(_t, y):
        ra, rv, Ra, Rv = y
        ta = qa * ra + (1 - qa) * rv
        tv = qv * rv + (1 - qv) * ra
        return [ta * (1 - Ra - ra) - mu * ra, tv * (1 - Rv - rv) - mu * rv, mu * ra, mu * rv]

    def extinct(_t, y):
        return y[0] + y[1] - stop_below
    extinct.terminal = True
    extinct.direction = -1

    y0 = [s[0], s[1], params.x_a, params.x_v]
    sol = solve_ivp(f, (0.0, horizon), y0, method="RK45", rtol=tolerance, atol=tolerance * 1e-3,
                    events=extinct, dense_output=False)
    if sol.status < 0:
        raise IntegrationError(f"SIR integration failed: {sol.message}")
    return SirTrajectory(sol.t, sol.y.T.copy(), params)


@dataclass(frozen=True)
class FinalSize:
    CI_a: float
    CI_v: float
    CI_total: float
    R_a_ss: float
    R_v_ss: float
    tilde_CI_a: float
    tilde_CI_v: float
    residuals: Tuple[float, float]
    seed: float
    params: ModelParams

    @property
    def delta_ci(self) -> float:
        return self.CI_a - self.CI_v

    @property
    def R(self) -> float:
        q = self.params.q
        return q * self.R_a_ss + (1 - q) * self.R_v_ss


def _mixing(params: ModelParams) -> np.ndarray:
    qa, qv = params.q_a, params.q_v
    return np.array([[qa, 1 - qa], [1 - qv, qv]])


def final_size_residual(params: ModelParams, ci: np.ndarray, seed: float = 0.0) -> np.ndarray:
    """``(1 - x_g) - (1 - x_g - s) exp(-tilde CI_g) - mu CI_g`` per group."""
    u = np.array([1.0 - params.x_a, 1.0 - params.x_v])
    s = _seeds(params, seed)
    tilde = _mixing(params) @ ci
    return u - (u - s) * np.exp(-tilde) - params.mu * ci


def solve_final_size(params: ModelParams, seed: float = 0.0, tol: float = 1e-13,
                     max_iter: int = 100000) -> FinalSize:
    """Largest solution of the final-size system.

    The map ``CI -> ((1 - x) - (1 - x - s) exp(-Q CI)) / mu`` is monotone, so
    iterating it from the upper bound ``(1 - x) / mu`` descends to the
    epidemic root; Newton steps then polish it. ``seed = 0`` is the limit of
    a vanishing initial outbreak.
    """
    mu = params.mu
    u = np.array([1.0 - params.x_a, 1.0 - params.x_v])
    s = _seeds(params, seed)
    Q = _mixing(params)
    ci = u / mu
    for _ in range(max_iter):
        new = (u - (u - s) * np.exp(-Q @ ci)) / mu
        step = np.max(np.abs(new - ci))
        ci = new
        if step < 1e-9:
            break
    for _ in range(50):
        res = final_size_residual(params, ci, seed)
        if np.max(np.abs(res)) <= tol:
            break
        jac = (u - s)[:, None] * np.exp(-Q @ ci)[:, None] * Q - mu * np.eye(2)
        try:
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            break
        trial = ci + delta
        if np.any(trial < -1e-15):
            break
        ci = np.maximum(trial, 0.0)
    res = final_size_residual(params, ci, seed)
    tilde = Q @ ci
    R = np.array([params.x_a, params.x_v]) + mu * ci
    q = params.q
    return FinalSize(float(ci[0]), float(ci[1]), float(q * ci[0] + (1 - q) * ci[1]),
                     float(R[0]), float(R[1]), float(tilde[0]), float(tilde[1]),
                     (float(res[0]), float(res[1])), float(seed), params)


@dataclass(frozen=True)
class SirHomophilyEffect:
    dh_ci: float
    dh_ci_vector: np.ndarray
    sign_certificate: int  # sign(R_v - R_a)
    det: float
    condition_met: bool


def dh_ci_sir(fs: FinalSize) -> SirHomophilyEffect:
    """h-derivative of total CI from the implicit final-size system.

    Solves ``(E^{-1} - Q) dCI = (1 - q, -q) dCI_gap`` with
    ``E^{-1} = diag(mu / (1 - R_g))``. The total equals
    ``q (1 - q) (e_v - e_a) dCI_gap / det``, which has the sign of
    ``R_v - R_a`` whenever the determinant is positive (guaranteed when
    ``mu > 1 - x_a``).
    """
    p = fs.params
    q, mu = p.q, p.mu
    e = np.array([mu / (1 - fs.R_a_ss), mu / (1 - fs.R_v_ss)])
    M = np.diag(e) - _mixing(p)
    det = float(np.linalg.det(M))
    rhs = np.array([1 - q, -q]) * fs.delta_ci
    vec = np.linalg.solve(M, rhs)
    total = float(q * vec[0] + (1 - q) * vec[1])
    return SirHomophilyEffect(total, vec, int(np.sign(fs.R_v_ss - fs.R_a_ss)), det,
                              p.mu > 1 - p.x_a)


def dh_ci_sir_closed_form(fs: FinalSize) -> float:
    p = fs.params
    q, mu = p.q, p.mu
    e = np.array([mu / (1 - fs.R_a_ss), mu / (1 - fs.R_v_ss)])
    M = np.diag(e) - _mixing(p)
    return float(q * (1 - q) * (e[1] - e[0]) * fs.delta_ci / np.linalg.det(M))
