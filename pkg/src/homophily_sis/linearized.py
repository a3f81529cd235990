"""Linearised outbreak dynamics around a steady state."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .core import ModelParams, eigvals_2x2
from .steady_state import SteadyState


def _as_deviation(d_rho0) -> np.ndarray:
    d = np.asarray(d_rho0, dtype=float)
    if d.ndim == 0:
        d = np.array([float(d), float(d)])
    if d.shape != (2,):
        raise ValueError(f"deviation must be a scalar or a 2-vector, got shape {d.shape}")
    return d


def inv_2x2(m: np.ndarray) -> np.ndarray:
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if det == 0.0:
        raise np.linalg.LinAlgError("singular 2x2 matrix")
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det


def _eigvec_pair(m: np.ndarray, e: float) -> Tuple[np.ndarray, np.ndarray]:
    """Right and left eigenvectors for eigenvalue ``e``, each from the better-conditioned formula."""
    a, b, c, d = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    r1, r2 = np.array([b, e - a]), np.array([e - d, c])
    l1, l2 = np.array([c, e - a]), np.array([e - d, b])
    right = r1 if np.linalg.norm(r1) >= np.linalg.norm(r2) else r2
    left = l1 if np.linalg.norm(l1) >= np.linalg.norm(l2) else l2
    if np.linalg.norm(right) == 0.0 or np.linalg.norm(left) == 0.0:
        raise ValueError("eigenvector undefined (repeated eigenvalue of a scalar matrix)")
    return right / np.linalg.norm(right), left / np.linalg.norm(left)


@dataclass(frozen=True)
class LinearizedSystem:
    J: np.ndarray
    eigs: Tuple[float, float]  # (e1, e2) with e1 <= e2
    right: Tuple[np.ndarray, np.ndarray]
    left: Tuple[np.ndarray, np.ndarray]
    params: ModelParams
    ss: SteadyState

    @classmethod
    def at(cls, ss: SteadyState) -> "LinearizedSystem":
        J = ss.jacobian()
        e1, e2 = eigvals_2x2(J)
        if e1 == e2:
            # only possible for a scalar matrix; any basis works
            basis = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))
            return cls(J, (e1, e2), basis, basis, ss.params, ss)
        u1, v1 = _eigvec_pair(J, e1)
        u2, v2 = _eigvec_pair(J, e2)
        return cls(J, (e1, e2), (u1, u2), (v1, v2), ss.params, ss)

    @property
    def trace(self) -> float:
        return float(self.J[0, 0] + self.J[1, 1])

    @property
    def det(self) -> float:
        return float(self.J[0, 0] * self.J[1, 1] - self.J[0, 1] * self.J[1, 0])

    @property
    def is_stable(self) -> bool:
        return self.eigs[1] < 0.0

    def eigenvalue_derivative(self, dJ: np.ndarray, which: int = 1) -> float:
        """First-order change of eigenvalue ``which`` (0 = e1, 1 = e2) along ``dJ``."""
        u, v = self.right[which], self.left[which]
        return float(v @ dJ @ u / (v @ u))


def expm_2x2(J: np.ndarray, t: float) -> np.ndarray:
    """``exp(tJ)`` for a 2x2 matrix with real eigenvalues.

    Uses ``exp(mt) [cosh(st) I + sinh(st)/s (J - mI)]`` written through the
    eigenvalues, with a series for ``sinh(st)/s`` when ``st`` is small.
    """
    m = 0.5 * (J[0, 0] + J[1, 1])
    e1, e2 = eigvals_2x2(J)
    s = 0.5 * (e2 - e1)
    st = s * t
    c = 0.5 * (np.exp(e1 * t) + np.exp(e2 * t))
    if st < 1e-4:
        sh = np.exp(m * t) * t * (1.0 + st * st / 6.0 + st ** 4 / 120.0)
    else:
        sh = (np.exp(e2 * t) - np.exp(e1 * t)) / (e2 - e1)
    return c * np.eye(2) + sh * (J - m * np.eye(2))


def linear_trajectory(sys: LinearizedSystem, d_rho0, t) -> np.ndarray:
    """Deviation ``exp(tJ) d_rho0``; ``t`` may be a scalar or an array (rows follow ``t``)."""
    d = _as_deviation(d_rho0)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ValueError("t must be nonnegative")
    out = np.array([expm_2x2(sys.J, ti) @ d for ti in ts])
    return out[0] if np.ndim(t) == 0 else out


@dataclass(frozen=True)
class CumulativeInfection:
    ci_a: float
    ci_v: float
    ci_total: float
    deviation: np.ndarray
    r: float

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.ci_a, self.ci_v])

    def affine_total(self, ss: SteadyState, scale: float = 1.0) -> float:
        """Aggregate ``rho_ss + CI * scale`` for a deviation of size ``scale``."""
        return ss.rho + self.ci_total * scale


def discount_resolvent(J: np.ndarray, r: float) -> np.ndarray:
    """``(rI - J)^{-1}``; entrywise nonnegative at a stable steady state."""
    M = r * np.eye(2) - J
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    assert det > 0.0, f"rI - J is not an M-matrix (det {det})"
    return inv_2x2(M)


def cumulative_infection(sys: LinearizedSystem, d_rho0=1.0, r: float | None = None) -> CumulativeInfection:
    """Bonacich-type total ``(I - J/r)^{-1} d_rho0`` of the discounted outbreak."""
    r = sys.params.r if r is None else r
    if r <= 0:
        raise ValueError("r must be positive")
    d = _as_deviation(d_rho0)
    ci = r * discount_resolvent(sys.J, r) @ d
    q = sys.params.q
    return CumulativeInfection(float(ci[0]), float(ci[1]), float(q * ci[0] + (1.0 - q) * ci[1]), d, r)


def leading_eigenvalue(sys: LinearizedSystem) -> float:
    """Signed eigenvalue closest to zero (negative at a stable state)."""
    e1, e2 = sys.eigs
    return e2 if abs(e2) <= abs(e1) else e1


def convergence_rate(sys: LinearizedSystem, discounted: bool = False) -> float:
    """Asymptotic decay rate ``|e2|`` of ``exp(tJ) d_rho0``.

    With ``discounted=True`` the rate of ``J - rI`` is returned, which is
    larger by ``r``.
    """
    rate = abs(leading_eigenvalue(sys))
    return rate + sys.params.r if discounted else rate


def discrete_powers_ci(sys: LinearizedSystem, d_rho0=1.0, r: float | None = None, n_terms: int = 2000) -> np.ndarray:
    """Truncated series ``sum_t (J/r)^t d_rho0``; converges when the spectral radius of J is below r."""
    r = sys.params.r if r is None else r
    d = _as_deviation(d_rho0)
    term, total = d.copy(), d.copy()
    step = sys.J / r
    for _ in range(n_terms):
        term = step @ term
        total += term
    return total
