"""Two-group SIS model with inbreeding homophily.

Group ``a`` (anti-vaxxers, population share ``q``) and group ``v`` (vaxxers,
share ``1 - q``). Each agent meets someone from its own group with
probability ``h`` and a uniformly drawn member of society otherwise.
Infectiousness is normalised to one; ``mu`` is the recovery rate.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy.integrate import solve_ivp


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelParams:
    q: float
    h: float
    mu: float
    x_a: float
    x_v: float
    r: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if not 0.0 <= self.h <= 1.0:
            raise ValueError(f"h must lie in [0, 1], got {self.h}")
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        for name in ("x_a", "x_v"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {val}")
        if not self.r > 0.0:
            raise ValueError(f"r must be positive, got {self.r}")

    @property
    def q_a(self) -> float:
        """Probability that an anti-vaxxer meets an anti-vaxxer."""
        return self.h + (1.0 - self.h) * self.q

    @property
    def q_v(self) -> float:
        """Probability that a vaxxer meets a vaxxer."""
        return self.h + (1.0 - self.h) * (1.0 - self.q)

    @property
    def x(self) -> float:
        return self.q * self.x_a + (1.0 - self.q) * self.x_v

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def require_ordered(self):
        if self.x_a > self.x_v:
            raise ValueError(f"operation assumes x_a <= x_v, got x_a={self.x_a}, x_v={self.x_v}")

    def swapped(self) -> "ModelParams":
        """Relabel the groups (a <-> v)."""
        return self.replace(q=1.0 - self.q, x_a=self.x_v, x_v=self.x_a)


@dataclass(frozen=True)
class InfectionState:
    rho_a: float
    rho_v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rho_a, self.rho_v])

    def susceptible(self, params: ModelParams) -> Tuple[float, float]:
        return 1.0 - self.rho_a - params.x_a, 1.0 - self.rho_v - params.x_v

    def exposure(self, params: ModelParams) -> Tuple[float, float]:
        """Share of infected among the contacts of each group."""
        qa, qv = params.q_a, params.q_v
        return (qa * self.rho_a + (1.0 - qa) * self.rho_v,
                qv * self.rho_v + (1.0 - qv) * self.rho_a)

    def aggregate(self, params: ModelParams) -> float:
        return params.q * self.rho_a + (1.0 - params.q) * self.rho_v

    def in_box(self, params: ModelParams, pad: float = 0.0) -> bool:
        return (-pad <= self.rho_a <= 1.0 - params.x_a + pad
                and -pad <= self.rho_v <= 1.0 - params.x_v + pad)

    def clamped(self, params: ModelParams) -> "InfectionState":
        return InfectionState(min(max(self.rho_a, 0.0), 1.0 - params.x_a),
                              min(max(self.rho_v, 0.0), 1.0 - params.x_v))


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    rho: np.ndarray  # shape (n, 2)
    tolerance: float
    n_steps: int
    params: ModelParams = field(repr=False)

    @property
    def final(self) -> InfectionState:
        return InfectionState(float(self.rho[-1, 0]), float(self.rho[-1, 1]))

    def states(self):
        return [InfectionState(float(a), float(v)) for a, v in self.rho]

    def aggregate(self) -> np.ndarray:
        q = self.params.q
        return q * self.rho[:, 0] + (1.0 - q) * self.rho[:, 1]


def meeting_rates(params: ModelParams) -> Tuple[float, float]:
    return params.q_a, params.q_v


def _rhs(rho_a, rho_v, q_a, q_v, mu, x_a, x_v):
    ta = q_a * rho_a + (1.0 - q_a) * rho_v
    tv = q_v * rho_v + (1.0 - q_v) * rho_a
    return ((1.0 - rho_a - x_a) * ta - mu * rho_a,
            (1.0 - rho_v - x_v) * tv - mu * rho_v)


def rhs_sis(params: ModelParams, state: InfectionState) -> Tuple[float, float]:
    """Time derivatives (d rho_a/dt, d rho_v/dt) of the SIS system."""
    return _rhs(state.rho_a, state.rho_v, params.q_a, params.q_v,
                params.mu, params.x_a, params.x_v)


def jacobian_at(params: ModelParams, state: InfectionState) -> np.ndarray:
    """Jacobian of the SIS vector field with respect to (rho_a, rho_v).

    Entries are ``[[A, B], [C, D]]`` with ``B, C >= 0`` (cooperative system).
    """
    qa, qv, mu = params.q_a, params.q_v, params.mu
    sa, sv = state.susceptible(params)
    ta, tv = state.exposure(params)
    return np.array([
        [-ta - mu + sa * qa, (1.0 - qa) * sa],
        [(1.0 - qv) * sv, -tv - mu + sv * qv],
    ])


def integrate_sis(params: ModelParams, initial: InfectionState, horizon: float,
                  tolerance: float = 1e-10, n_samples: int | None = None) -> Trajectory:
    """Integrate the SIS system with an adaptive Dormand-Prince 4(5) scheme.

    States leaving the invariant box by at most ``10 * tolerance`` are clamped
    back; larger violations raise :class:`IntegrationError`.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    qa, qv, mu, xa, xv = params.q_a, params.q_v, params.mu, params.x_a, params.x_v

    def f(_t, y):
        return _rhs(y[0], y[1], qa, qv, mu, xa, xv)

    t_eval = None
    if n_samples is not None:
        t_eval = np.linspace(0.0, horizon, n_samples)
    sol = solve_ivp(f, (0.0, horizon), initial.as_array(), method="RK45",
                    rtol=tolerance, atol=tolerance, t_eval=t_eval)
    if sol.status != 0:
        raise IntegrationError(f"integration failed: {sol.message}")

    rho = sol.y.T.copy()
    upper = np.array([1.0 - xa, 1.0 - xv])
    pad = 10.0 * tolerance
    if np.any(rho < -pad) or np.any(rho > upper + pad):
        raise IntegrationError("trajectory left the invariant box beyond tolerance")
    rho = np.clip(rho, 0.0, upper)
    return Trajectory(t=sol.t, rho=rho, tolerance=tolerance, n_steps=int(sol.t.size), params=params)


def eigvals_2x2(m: np.ndarray) -> Tuple[float, float]:
    """Real eigenvalues ``(low, high)`` of a 2x2 matrix with nonnegative discriminant.

    The discriminant ``(A - D)**2 + 4 B C`` is nonnegative whenever ``B C >= 0``.
    """
    a, b, c, d = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    disc = (a - d) ** 2 + 4.0 * b * c
    if disc < 0:
        if disc < -1e-14 * max(1.0, (a - d) ** 2):
            raise ValueError(f"complex eigenvalues, discriminant {disc}")
        disc = 0.0
    root = np.sqrt(disc)
    tr = a + d
    det = a * d - b * c
    # avoid cancellation in the root closer to zero
    if tr <= 0:
        low = 0.5 * (tr - root)
        high = det / low if low != 0 else 0.5 * (tr + root)
    else:
        high = 0.5 * (tr + root)
        low = det / high
    return float(min(low, high)), float(max(low, high))
