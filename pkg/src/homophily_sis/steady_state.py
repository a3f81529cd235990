"""Epidemic threshold and the stable steady state of the SIS system."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .core import InfectionState, ModelParams, eigvals_2x2, jacobian_at, rhs_sis

THRESHOLD_GAP = 1e-8


class SteadyStateKind(str, Enum):
    INTERIOR = "interior"
    DISEASE_FREE = "disease_free"


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SteadyState:
    params: ModelParams
    state: InfectionState
    kind: SteadyStateKind
    mu_hat: float
    residual: float
    iterations: int = 0

    @property
    def rho_a(self) -> float:
        return self.state.rho_a

    @property
    def rho_v(self) -> float:
        return self.state.rho_v

    @property
    def rho(self) -> float:
        return self.state.aggregate(self.params)

    @property
    def S_a(self) -> float:
        return self.state.susceptible(self.params)[0]

    @property
    def S_v(self) -> float:
        return self.state.susceptible(self.params)[1]

    @property
    def rho_tilde_a(self) -> float:
        return self.state.exposure(self.params)[0]

    @property
    def rho_tilde_v(self) -> float:
        return self.state.exposure(self.params)[1]

    @property
    def theta(self) -> Tuple[float, float]:
        """Probability of being infected for a non-vaccinated member of each group.

        Computed as ``rho_tilde / (rho_tilde + mu)``, which equals
        ``rho_g / (1 - x_g)`` at rest and stays defined when ``x_g = 1``.
        """
        mu = self.params.mu
        ta, tv = self.rho_tilde_a, self.rho_tilde_v
        return ta / (ta + mu), tv / (tv + mu)

    @property
    def is_interior(self) -> bool:
        return self.kind is SteadyStateKind.INTERIOR

    def jacobian(self) -> np.ndarray:
        return jacobian_at(self.params, self.state)


@dataclass(frozen=True)
class StabilityReport:
    eigenvalues: Tuple[float, float]
    stable: bool


def threshold_terms(params: ModelParams) -> Tuple[float, float]:
    """Return ``(T, Delta)`` with ``mu_hat = (T + Delta) / 2``."""
    ua, uv = 1.0 - params.x_a, 1.0 - params.x_v
    T = params.q_a * ua + params.q_v * uv
    radicand = T * T - 4.0 * params.h * ua * uv
    # radicand equals (q_a ua - q_v uv)^2 + 4 (1-q_a)(1-q_v) ua uv >= 0
    assert radicand >= -1e-14, radicand
    return T, float(np.sqrt(max(radicand, 0.0)))


def epidemic_threshold(params: ModelParams) -> float:
    """Recovery rate above which the disease-free state is the only rest point."""
    T, delta = threshold_terms(params)
    return 0.5 * (T + delta)


def _residual(params: ModelParams, rho: np.ndarray) -> np.ndarray:
    return np.array(rhs_sis(params, InfectionState(rho[0], rho[1])))


def _closed_form(params: ModelParams) -> Optional[np.ndarray]:
    """Exact interior rest point at h = 0 or h = 1, else None."""
    mu = params.mu
    if params.h == 0.0:
        x = params.x
        if 1.0 - x - mu <= 0.0:
            return np.zeros(2)
        scale = (1.0 - x - mu) / (1.0 - x)
        return np.array([(1.0 - params.x_a) * scale, (1.0 - params.x_v) * scale])
    if params.h == 1.0:
        return np.array([max(1.0 - params.x_a - mu, 0.0), max(1.0 - params.x_v - mu, 0.0)])
    return None


def _newton(params: ModelParams, start: np.ndarray, tol: float, max_iter: int):
    """Damped Newton iteration projected onto the invariant box."""
    upper = np.array([1.0 - params.x_a, 1.0 - params.x_v])
    rho = np.clip(np.asarray(start, dtype=float), 0.0, upper)
    res = _residual(params, rho)
    norm = np.max(np.abs(res))
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return rho, norm, it - 1
        J = jacobian_at(params, InfectionState(rho[0], rho[1]))
        try:
            step = -np.linalg.solve(J, res)
        except np.linalg.LinAlgError:
            return rho, norm, it
        lam = 1.0
        while lam > 1e-10:
            trial = np.clip(rho + lam * step, 0.0, upper)
            trial_res = _residual(params, trial)
            trial_norm = np.max(np.abs(trial_res))
            if trial_norm < (1.0 - 1e-4 * lam) * norm or trial_norm <= tol:
                break
            lam *= 0.5
        else:
            return rho, norm, it
        rho, res, norm = trial, trial_res, trial_norm
    return rho, norm, max_iter


def _is_endemic(params: ModelParams, rho: np.ndarray) -> bool:
    # Near the zero state the residual is O(rho) and can pass the tolerance, while a
    # group below its own threshold near h = 1 has a legitimately tiny prevalence.
    # The endemic point is the one whose Jacobian is stable.
    if not np.any(rho > 0.0):
        return False
    return eigvals_2x2(jacobian_at(params, InfectionState(rho[0], rho[1])))[1] < 0.0


def _starts(params: ModelParams, guess: Optional[np.ndarray]):
    upper = np.array([1.0 - params.x_a, 1.0 - params.x_v])
    if guess is not None:
        yield np.asarray(guess, dtype=float)
    x, mu = params.x, params.mu
    if 1.0 - x - mu > 0.0:
        yield upper * (1.0 - x - mu) / (1.0 - x)
    yield np.maximum(upper - mu, 0.5 * upper)
    yield 0.9 * upper
    for fa, fv in itertools.product((0.25, 0.5, 0.75, 1.0), repeat=2):
        yield upper * np.array([fa, fv])


def solve_steady_state(params: ModelParams, tol: float = 1e-13, max_iter: int = 100,
                       guess: Optional[np.ndarray] = None) -> SteadyState:
    """Stable steady state: interior when ``mu < mu_hat``, else disease free.

    ``guess`` seeds the Newton iteration (continuation in sweeps); the h = 0
    closed form is the default start.
    """
    mu_hat = epidemic_threshold(params)
    if params.mu >= mu_hat - THRESHOLD_GAP:
        return SteadyState(params, InfectionState(0.0, 0.0), SteadyStateKind.DISEASE_FREE, mu_hat, 0.0)

    exact = _closed_form(params)
    if exact is not None:
        res = float(np.max(np.abs(_residual(params, exact))))
        state = InfectionState(float(exact[0]), float(exact[1]))
        return SteadyState(params, state, SteadyStateKind.INTERIOR, mu_hat, res)

    best = None
    for start in _starts(params, guess):
        rho, norm, its = _newton(params, start, tol, max_iter)
        if norm <= tol and _is_endemic(params, rho):
            state = InfectionState(float(rho[0]), float(rho[1]))
            return SteadyState(params, state, SteadyStateKind.INTERIOR, mu_hat, float(norm), its)
        if best is None or norm < best[1]:
            best = (rho, norm)
    raise ConvergenceError(
        f"no interior steady state found for {params}; best residual {best[1]:.3e} at {best[0]}")


def audit_uniqueness(params: ModelParams, tol: float = 1e-12, grid: int = 4) -> np.ndarray:
    """Multi-start Newton from a ``grid x grid`` box lattice; returns the distinct endemic roots."""
    upper = np.array([1.0 - params.x_a, 1.0 - params.x_v])
    fracs = (np.arange(grid) + 1.0) / (grid + 1.0)
    roots = []
    for fa, fv in itertools.product(fracs, repeat=2):
        rho, norm, _ = _newton(params, upper * np.array([fa, fv]), tol, 200)
        if norm <= tol and _is_endemic(params, rho):
            if not any(np.max(np.abs(rho - r)) < 1e-8 for r in roots):
                roots.append(rho)
    return np.array(roots).reshape(-1, 2)


def classify_stability(params: ModelParams, ss: SteadyState) -> StabilityReport:
    eig = eigvals_2x2(jacobian_at(params, ss.state))
    return StabilityReport(eigenvalues=eig, stable=eig[1] < 0.0)


def lemma_orderings(ss: SteadyState, slack: float = 1e-12) -> dict:
    """Orderings of an interior rest point with ``x_a <= x_v``."""
    p = ss.params
    return {
        "rho_a>=rho_tilde_a": ss.rho_a >= ss.rho_tilde_a - slack,
        "rho_tilde_a>=rho_tilde_v": ss.rho_tilde_a >= ss.rho_tilde_v - slack,
        "rho_tilde_v>=rho_v": ss.rho_tilde_v >= ss.rho_v - slack,
        "S_a>=S_v": ss.S_a >= ss.S_v - slack,
        "dx>=drho": (p.x_v - p.x_a) >= (ss.rho_a - ss.rho_v) - slack,
    }
