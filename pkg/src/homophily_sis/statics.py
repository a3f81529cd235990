"""Comparative statics of steady states, cumulative infection and convergence rate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .core import ModelParams
from .linearized import LinearizedSystem, _as_deviation, discount_resolvent, inv_2x2, leading_eigenvalue
from .steady_state import SteadyState

JACOBIAN_PARAMS = ("h", "rho_a", "rho_v", "x_a", "x_v", "mu")
STATE_PARAMS = ("h", "x_a", "x_v", "mu")


def jacobian_partials(ss: SteadyState) -> Dict[str, np.ndarray]:
    """Entrywise derivatives of J holding every other argument fixed."""
    p = ss.params
    q, qa, qv = p.q, p.q_a, p.q_v
    sa, sv = ss.S_a, ss.S_v
    drho = ss.rho_a - ss.rho_v
    return {
        "h": np.array([[-(1 - q) * drho + sa * (1 - q), -(1 - q) * sa],
                       [-q * sv, q * drho + q * sv]]),
        "rho_a": np.array([[-2 * qa, -(1 - qa)], [0.0, -(1 - qv)]]),
        "rho_v": np.array([[-(1 - qa), 0.0], [-(1 - qv), -2 * qv]]),
        "x_a": np.array([[-qa, -(1 - qa)], [0.0, 0.0]]),
        "x_v": np.array([[0.0, 0.0], [-(1 - qv), -qv]]),
        "mu": -np.eye(2),
    }


def field_partials(ss: SteadyState) -> Dict[str, np.ndarray]:
    """Derivatives of the SIS vector field in parameters, state fixed."""
    p = ss.params
    drho = ss.rho_a - ss.rho_v
    return {
        "h": np.array([(1 - p.q) * ss.S_a * drho, -p.q * ss.S_v * drho]),
        "x_a": np.array([-ss.rho_tilde_a, 0.0]),
        "x_v": np.array([0.0, -ss.rho_tilde_v]),
        "mu": np.array([-ss.rho_a, -ss.rho_v]),
    }


def _require_interior(ss: SteadyState):
    if not ss.is_interior:
        raise ValueError("comparative statics need an interior steady state")


def dparam_steady_state(ss: SteadyState, which: str) -> np.ndarray:
    """Response ``(d rho_a, d rho_v)`` of the steady state by the implicit function theorem."""
    if which not in STATE_PARAMS:
        raise ValueError(f"unknown parameter {which!r}; expected one of {STATE_PARAMS}")
    _require_interior(ss)
    J = ss.jacobian()
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if det <= 1e-14:
        raise ValueError(f"Jacobian nearly singular (det {det}); too close to the threshold")
    return -inv_2x2(J) @ field_partials(ss)[which]


@dataclass(frozen=True)
class SteadyStateSensitivity:
    dh_rho_a: float
    dh_rho_v: float
    dh_rho: float
    dxa_rho_a: float
    dxa_rho_v: float
    dxv_rho_a: float
    dxv_rho_v: float
    detJ: float


def dh_steady_state(ss: SteadyState) -> SteadyStateSensitivity:
    """Closed-form sensitivities of the interior steady state."""
    _require_interior(ss)
    p = ss.params
    q, mu = p.q, p.mu
    sa, sv, ta, tv = ss.S_a, ss.S_v, ss.rho_tilde_a, ss.rho_tilde_v
    drho = ss.rho_a - ss.rho_v
    J = ss.jacobian()
    det = float(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
    if det <= 1e-14:
        raise ValueError(f"Jacobian nearly singular (det {det}); too close to the threshold")
    dh_a = -sa * (1 - q) * drho * (sv - tv - mu) / det
    dh_v = sv * q * drho * (sa - ta - mu) / det
    dh = q * (1 - q) * drho * (sa * (tv + mu) - sv * (ta + mu)) / det
    dxa = dparam_steady_state(ss, "x_a")
    dxv = dparam_steady_state(ss, "x_v")
    return SteadyStateSensitivity(dh_a, dh_v, dh, dxa[0], dxa[1], dxv[0], dxv[1], det)


def dparam_ci(sys: LinearizedSystem, d_rho0, which: str, r: float | None = None) -> Tuple[np.ndarray, float]:
    """Partial derivative of the CI vector and total with the steady state held fixed."""
    if which not in JACOBIAN_PARAMS:
        raise ValueError(f"unknown parameter {which!r}; expected one of {JACOBIAN_PARAMS}")
    r = sys.params.r if r is None else r
    d = _as_deviation(d_rho0)
    R = discount_resolvent(sys.J, r)
    dJ = jacobian_partials(sys.ss)[which]
    vec = r * R @ dJ @ R @ d
    q = sys.params.q
    return vec, float(q * vec[0] + (1 - q) * vec[1])


@dataclass(frozen=True)
class CISensitivity:
    direct: float
    indirect: float
    direct_vector: np.ndarray
    indirect_vector: np.ndarray
    wrt: str = "h"

    @property
    def total(self) -> float:
        return self.direct + self.indirect

    @property
    def total_vector(self) -> np.ndarray:
        return self.direct_vector + self.indirect_vector


def dparam_ci_total(sys: LinearizedSystem, d_rho0=1.0, which: str = "h", r: float | None = None) -> CISensitivity:
    """Direct effect through J plus indirect effect through the steady-state response."""
    if which not in STATE_PARAMS:
        raise ValueError(f"unknown parameter {which!r}; expected one of {STATE_PARAMS}")
    direct_vec, direct = dparam_ci(sys, d_rho0, which, r)
    drho = dparam_steady_state(sys.ss, which)
    va, ta = dparam_ci(sys, d_rho0, "rho_a", r)
    vv, tv = dparam_ci(sys, d_rho0, "rho_v", r)
    ind_vec = va * drho[0] + vv * drho[1]
    return CISensitivity(direct, ta * drho[0] + tv * drho[1], direct_vec, ind_vec, which)


def dh_ci_total(sys: LinearizedSystem, d_rho0=1.0, r: float | None = None) -> CISensitivity:
    return dparam_ci_total(sys, d_rho0, "h", r)


def dparam_convergence_rate(sys: LinearizedSystem, which: str, total: bool = False) -> float:
    """Derivative of ``|e2|`` by first-order eigenvalue perturbation.

    With ``total=True`` the steady-state response is included (only for
    parameters in ``STATE_PARAMS``).
    """
    if which not in JACOBIAN_PARAMS:
        raise ValueError(f"unknown parameter {which!r}")
    lead = leading_eigenvalue(sys)
    idx = 1 if lead == sys.eigs[1] else 0
    parts = jacobian_partials(sys.ss)
    dJ = parts[which]
    if total:
        if which not in STATE_PARAMS:
            raise ValueError(f"total derivative undefined for {which!r}")
        drho = dparam_steady_state(sys.ss, which)
        dJ = dJ + parts["rho_a"] * drho[0] + parts["rho_v"] * drho[1]
    de = sys.eigenvalue_derivative(dJ, idx)
    return -de if lead < 0 else de


# Limits of the derivatives at full integration (h = 0) and full segregation (h = 1)

def _gap(params: ModelParams) -> float:
    return params.x_v - params.x_a


def ci_direct_dh_uniform(params: ModelParams, d_rho0: float = 1.0) -> float:
    """Direct h-effect on total CI at h = 0 for a symmetric deviation."""
    q, mu, r, ux = params.q, params.mu, params.r, 1.0 - params.x
    num = mu * (1 - q) * q * _gap(params) ** 2 * (2 * mu - ux) * d_rho0
    return r * num / (ux ** 2 * (r + ux) * (r + ux - mu) ** 2)


def ci_total_dh_uniform(params: ModelParams, d_rho0: float = 1.0) -> float:
    """Total h-effect (direct plus through the steady state) on CI at h = 0."""
    q, mu, r, ux = params.q, params.mu, params.r, 1.0 - params.x
    num = mu * (1 - q) * q * d_rho0 * _gap(params) ** 2 * (-2 * r + 2 * mu - 3 * ux)
    return r * num / (ux ** 2 * (r + ux) * (-r + mu - ux) ** 2)


def ci_direct_dh_segregated(params: ModelParams, d_rho0: float = 1.0) -> float:
    """Direct h-effect on total CI at h = 1 for a symmetric deviation."""
    q, mu, r, xa, xv = params.q, params.mu, params.r, params.x_a, params.x_v
    num = -(1 - q) * q * d_rho0 * _gap(params) ** 2 * (-2 * r + mu + xa + xv - 2)
    return r * num / ((-r + mu + xa - 1) ** 2 * (-r + mu + xv - 1) ** 2)


def cr_dh_segregated(ss: SteadyState) -> float:
    """h-derivative of |e2| at h = 1 with the steady state held fixed."""
    p = ss.params
    return -p.q * ((ss.rho_a - ss.rho_v) + ss.S_v)


def cr_dh_uniform(params: ModelParams) -> float:
    """h-derivative of |e2| at h = 0 with the steady state held fixed."""
    q, ux = params.q, 1.0 - params.x
    return (1 - q) * q * (ux - 2 * params.mu) * _gap(params) ** 2 / ux ** 2


def single_peak_condition(params: ModelParams) -> bool:
    """Sufficient condition for a single interior maximum of rho(h)."""
    return params.mu < (1.0 - params.x) ** 2 / (1.0 - params.x_a)


@dataclass(frozen=True)
class OutbreakSteps:
    deviations: np.ndarray  # (n + 1, 2), row t is d rho_t
    aggregate: np.ndarray
    gap: np.ndarray  # d rho_a - d rho_v per step
    step1_aggregate_formula: float
    step1_gap_formula: float


def discrete_outbreak_steps(ss: SteadyState, d_rho0: float = 1.0, n: int = 2) -> OutbreakSteps:
    """Iterate ``d rho_{t+1} = J d rho_t`` from a symmetric deviation."""
    if n < 1:
        raise ValueError("n must be at least 1")
    p = ss.params
    J = ss.jacobian()
    devs = [np.array([d_rho0, d_rho0], dtype=float)]
    for _ in range(n):
        devs.append(J @ devs[-1])
    devs = np.array(devs)
    agg = p.q * devs[:, 0] + (1 - p.q) * devs[:, 1]
    gap = devs[:, 0] - devs[:, 1]
    step1_agg = (-2 * ss.rho - p.mu + 1 - p.x) * d_rho0
    step1_gap = ((ss.S_a - ss.S_v) - p.h * (ss.rho_a - ss.rho_v)) * d_rho0
    return OutbreakSteps(devs, agg, gap, step1_agg, step1_gap)
