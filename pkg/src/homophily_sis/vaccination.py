"""Endogenous vaccination: rational, peer-pressure and mixed equilibria, welfare and the planner optimum."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq, root

from .core import ModelParams
from .linearized import LinearizedSystem, cumulative_infection, inv_2x2
from .statics import dparam_ci, dparam_steady_state
from .steady_state import SteadyState, solve_steady_state

FP_TOL = 1e-10


class ModelKind(str, Enum):
    RATIONAL = "rational"
    PEER = "peer"
    MIXED = "mixed"


@dataclass(frozen=True)
class VaccinationParams:
    k: float
    d: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.d < 0:
            raise ValueError(f"d must be nonnegative, got {self.d}")
        if self.b < 0:
            raise ValueError(f"b must be nonnegative, got {self.b}")


_STATUS_NAMES = {0: "Zero", 1: "Interior", 2: "One"}


def classify_pair(x_a: float, x_v: float, tol: float = 1e-9) -> str:
    def status(x):
        if x <= tol:
            return 0
        if x >= 1 - tol:
            return 2
        return 1
    sa, sv = status(x_a), status(x_v)
    if sa == sv == 1:
        return "interior"
    if sa == sv == 0:
        return "bothZero"
    if sa == sv == 2:
        return "bothOne"
    return f"a{_STATUS_NAMES[sa]}_v{_STATUS_NAMES[sv]}"


@dataclass(frozen=True)
class VaccinationEquilibrium:
    x_a_star: float
    x_v_star: float
    kind: ModelKind
    classification: str
    residual: float
    induced: Optional[SteadyState] = field(default=None, repr=False)
    derivatives: Optional[Tuple[float, float]] = None

    @property
    def x(self) -> np.ndarray:
        return np.array([self.x_a_star, self.x_v_star])

    @property
    def is_interior(self) -> bool:
        return self.classification == "interior"


def clamp01(v):
    return np.minimum(np.maximum(v, 0.0), 1.0)


# --- rational vaccination -------------------------------------------------

def _theta(params: ModelParams, x: np.ndarray, guess=None) -> Tuple[np.ndarray, SteadyState]:
    ss = solve_steady_state(params.replace(x_a=float(x[0]), x_v=float(x[1])), guess=guess)
    return np.array(ss.theta), ss


def rational_best_response(params: ModelParams, vp: VaccinationParams, x) -> np.ndarray:
    """Truncated best responses ``(k theta_a - d, k theta_v)`` given vaccination ``x``."""
    th, _ = _theta(params, np.asarray(x, dtype=float))
    return clamp01(vp.k * th - np.array([vp.d, 0.0]))


def theta_partials(ss: SteadyState) -> np.ndarray:
    """Matrix ``d theta_g / d x_j`` at an interior steady state."""
    p = ss.params
    ua, uv = 1 - p.x_a, 1 - p.x_v
    dxa = dparam_steady_state(ss, "x_a")
    dxv = dparam_steady_state(ss, "x_v")
    return np.array([
        [dxa[0] / ua + ss.rho_a / ua ** 2, dxv[0] / ua],
        [dxa[1] / uv, dxv[1] / uv + ss.rho_v / uv ** 2],
    ])


def _rational_free_solve(params, vp, free, fixed_x, starts):
    """Solve the untruncated equations in the coordinates ``free`` with the rest pinned."""
    shift = np.array([vp.d, 0.0])
    found = []
    free = list(free)

    def full(z):
        x = fixed_x.copy()
        x[free] = z
        return x

    def resid(z):
        x = full(np.clip(z, 0.0, 1.0))
        th, _ = _theta(params, x)
        return (x - (vp.k * th - shift))[free]

    if len(free) == 1:
        grid = np.linspace(0.0, 1.0, 41)
        vals = [resid(np.array([g]))[0] for g in grid]
        for lo, hi, flo, fhi in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
            if flo == 0.0:
                found.append(full(np.array([lo])))
            elif flo * fhi < 0:
                z = brentq(lambda s: resid(np.array([s]))[0], lo, hi, xtol=1e-14, rtol=1e-14)
                found.append(full(np.array([z])))
        if vals[-1] == 0.0:
            found.append(full(np.array([1.0])))
        return found

    for s in starts:
        sol = root(resid, s, method="hybr", options={"xtol": 1e-14})
        # hybr often flags "no further improvement" at machine precision, so judge by residual
        ok = np.max(np.abs(sol.fun)) <= 1e-11
        if ok and np.all(sol.x > -1e-12) and np.all(sol.x < 1 + 1e-12):
            found.append(full(np.clip(sol.x, 0.0, 1.0)))
    return found


def _dedupe(points, tol=1e-8):
    out = []
    for p in points:
        if not any(np.max(np.abs(p - o)) < tol for o in out):
            out.append(p)
    return out


def enumerate_rational_equilibria(params: ModelParams, vp: VaccinationParams,
                                  n_starts: int = 9) -> List[VaccinationEquilibrium]:
    """All fixed points of the truncated rational best responses, one truncation pattern at a time."""
    fracs = np.linspace(0.1, 0.9, int(round(np.sqrt(n_starts))))
    starts = [np.array(s) for s in itertools.product(fracs, repeat=2)]
    candidates = []
    for pa, pv in itertools.product((0, 1, 2), repeat=2):
        fixed = np.array([0.0 if pa == 0 else 1.0, 0.0 if pv == 0 else 1.0])
        free = [i for i, s in enumerate((pa, pv)) if s == 1]
        if free:
            cands = _rational_free_solve(params, vp, free, fixed, [s[free] for s in starts])
        else:
            cands = [fixed]
        candidates.extend(cands)
    out = []
    for x in _dedupe(candidates):
        br = rational_best_response(params, vp, x)
        res = float(np.max(np.abs(x - br)))
        if res <= 1e-9:
            ss = solve_steady_state(params.replace(x_a=float(x[0]), x_v=float(x[1])))
            out.append(VaccinationEquilibrium(float(x[0]), float(x[1]), ModelKind.RATIONAL,
                                              classify_pair(*x), res, ss))
    return out


def solve_rational_equilibrium(params: ModelParams, vp: VaccinationParams,
                               n_starts: int = 9) -> VaccinationEquilibrium:
    """Unique equilibrium of the rational model (``x_a``, ``x_v`` in ``params`` are ignored)."""
    eqs = enumerate_rational_equilibria(params, vp, n_starts)
    if not eqs:
        raise RuntimeError(f"no rational equilibrium found for {params}, {vp}")
    if len(eqs) > 1:
        raise RuntimeError(f"multiple rational equilibria: {[e.x for e in eqs]}")
    eq = eqs[0]
    try:
        der = dh_rational(params, vp, eq)
    except ValueError:
        der = None
    return VaccinationEquilibrium(eq.x_a_star, eq.x_v_star, eq.kind, eq.classification,
                                  eq.residual, eq.induced, der)


def _free_coords(eq: VaccinationEquilibrium, tol=1e-9):
    return [i for i, v in enumerate(eq.x) if tol < v < 1 - tol]


def dh_rational(params: ModelParams, vp: VaccinationParams, eq: VaccinationEquilibrium) -> Tuple[float, float]:
    """``(d x_a*/dh, d x_v*/dh)``; truncated coordinates do not move."""
    free = _free_coords(eq)
    ss = eq.induced
    if not free:
        return 0.0, 0.0
    if not ss.is_interior:
        raise ValueError("induced steady state is disease free")
    p = ss.params
    dth_dx = theta_partials(ss)
    dh_rho = dparam_steady_state(ss, "h")
    dth_dh = dh_rho / np.array([1 - p.x_a, 1 - p.x_v])
    Jx = np.eye(2) - vp.k * dth_dx
    Jh = -vp.k * dth_dh
    sub = Jx[np.ix_(free, free)]
    if abs(np.linalg.det(sub)) < 1e-12:
        raise ValueError("singular equilibrium Jacobian")
    out = np.zeros(2)
    out[free] = -np.linalg.solve(sub, Jh[free])
    return float(out[0]), float(out[1])


# --- effects of homophily with endogenous vaccination ---------------------

@dataclass(frozen=True)
class EndogenousEffects:
    dh_x: Tuple[float, float]
    dh_rho_a: float
    dh_rho_v: float
    dh_rho: float
    dh_ci: float


def endogenous_dh(ss: SteadyState, dh_x, d_rho0=1.0) -> EndogenousEffects:
    """Total h-derivatives of steady state and CI when vaccination responds with ``dh_x``."""
    p = ss.params
    dh_x = np.asarray(dh_x, dtype=float)
    drho = (dparam_steady_state(ss, "h") + dparam_steady_state(ss, "x_a") * dh_x[0]
            + dparam_steady_state(ss, "x_v") * dh_x[1])
    sys = LinearizedSystem.at(ss)
    total = dparam_ci(sys, d_rho0, "h")[1]
    total += dparam_ci(sys, d_rho0, "rho_a")[1] * drho[0] + dparam_ci(sys, d_rho0, "rho_v")[1] * drho[1]
    total += dparam_ci(sys, d_rho0, "x_a")[1] * dh_x[0] + dparam_ci(sys, d_rho0, "x_v")[1] * dh_x[1]
    agg = p.q * drho[0] + (1 - p.q) * drho[1]
    return EndogenousEffects((float(dh_x[0]), float(dh_x[1])), float(drho[0]), float(drho[1]),
                             float(agg), float(total))


# --- peer-pressure vaccination --------------------------------------------

def peer_best_response(q: float, h: float, k: float, d: float, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    qa = h + (1 - h) * q
    qv = h + (1 - h) * (1 - q)
    xa, xv = x[..., 0], x[..., 1]
    ba = k * (qa * xa + (1 - qa) * xv) - d
    bv = k * (qv * xv + (1 - qv) * xa)
    return clamp01(np.stack([ba, bv], axis=-1))


def _peer_linear(q, h, k, d):
    """Untruncated best responses as ``x -> M x + c``."""
    qa = h + (1 - h) * q
    qv = h + (1 - h) * (1 - q)
    M = k * np.array([[qa, 1 - qa], [1 - qv, qv]])
    c = np.array([-d, 0.0])
    return M, c


def enumerate_peer_equilibria(q: float, h: float, k: float, d: float,
                              tol: float = 1e-12) -> List[VaccinationEquilibrium]:
    """Every fixed point of the truncated peer best responses.

    Each coordinate is pinned at 0, pinned at 1 or left free; the free ones
    solve a linear system and each candidate is checked against the
    truncation it assumed. Degenerate patterns with a continuum of
    solutions are skipped.
    """
    M, c = _peer_linear(q, h, k, d)
    found = []
    for pattern in itertools.product((0, 1, 2), repeat=2):
        x = np.array([0.0 if s == 0 else 1.0 for s in pattern])
        free = [i for i, s in enumerate(pattern) if s == 1]
        if free:
            fixed = [i for i in range(2) if i not in free]
            A = np.eye(len(free)) - M[np.ix_(free, free)]
            rhs = c[free] + M[np.ix_(free, fixed)] @ x[fixed]
            if abs(np.linalg.det(A)) < 1e-14:
                continue
            x[free] = np.linalg.solve(A, rhs)
            if np.any(x[free] < -tol) or np.any(x[free] > 1 + tol):
                continue
        raw = M @ x + c
        ok = all((s != 0 or raw[i] <= tol) and (s != 2 or raw[i] >= 1 - tol) for i, s in enumerate(pattern))
        if not ok:
            continue
        x = clamp01(x)
        res = float(np.max(np.abs(x - peer_best_response(q, h, k, d, x))))
        if res <= FP_TOL and not any(np.max(np.abs(x - e.x)) < 1e-9 for e in found):
            der = dh_peer_branch(q, h, k, d, x)
            found.append(VaccinationEquilibrium(float(x[0]), float(x[1]), ModelKind.PEER,
                                                classify_pair(*x), res, None, der))
    return found


def peer_interior_formula(q: float, h: float, k: float, d: float) -> Optional[Tuple[float, float]]:
    """Closed-form interior peer equilibrium, or None outside its existence region."""
    if not (k > 1 and h < 1 - (k - 1) / (k * q) and d < (k - 1) * (1 - h * k) / (k * q * (1 - h))):
        return None
    den = (k - 1) * (1 - h * k)
    return d * (1 - k * (1 - (1 - h) * q)) / den, d * (1 - h) * k * q / den


def peer_taxonomy(q: float, h: float, k: float, d: float) -> List[Tuple[str, Tuple[float, float]]]:
    """Equilibria listed case by case from their existence conditions."""
    qa = h + (1 - h) * q
    qv = h + (1 - h) * (1 - q)
    out = [("bothZero", (0.0, 0.0))]
    inner = peer_interior_formula(q, h, k, d)
    if inner is not None and d > 0:
        out.append(("interior", inner))
    if k * qv >= 1 and k * (1 - qa) <= d:
        out.append(("aZero_vOne", (0.0, 1.0)))
    if k >= 1 + d:
        out.append(("bothOne", (1.0, 1.0)))
    if k * qv >= 1 and k * qa < 1:
        xa = (k * (1 - qa) - d) / (1 - k * qa)
        if 0 < xa < 1:
            out.append(("aInterior_vOne", (xa, 1.0)))
    return out


def dh_peer(q: float, h: float, k: float, d: float) -> Tuple[float, float]:
    """h-derivatives of the interior peer equilibrium."""
    if peer_interior_formula(q, h, k, d) is None:
        raise ValueError("interior peer equilibrium does not exist here")
    den = (h * k - 1) ** 2
    return -d * k * (1 - q) / den, d * k * q / den


def dh_peer_branch(q: float, h: float, k: float, d: float, x) -> Tuple[float, float]:
    """h-derivatives along any branch by differentiating its linear system."""
    x = np.asarray(x, dtype=float)
    free = [i for i, v in enumerate(x) if 1e-9 < v < 1 - 1e-9]
    if not free:
        return 0.0, 0.0
    M, _ = _peer_linear(q, h, k, d)
    dM = k * np.array([[1 - q, -(1 - q)], [-q, q]])
    A = np.eye(len(free)) - M[np.ix_(free, free)]
    out = np.zeros(2)
    out[free] = np.linalg.solve(A, (dM @ x)[free])
    return float(out[0]), float(out[1])


# --- mixed model ----------------------------------------------------------

def _mixed_x_a(params: ModelParams, vp: VaccinationParams, x_v: float) -> float:
    """Peer-pressure response of anti-vaxxers given ``x_v`` (unique when ``k q_a < 1``)."""
    qa = params.q_a
    return float(clamp01((vp.k * (1 - qa) * x_v - vp.d) / (1 - vp.k * qa)))


def _mixed_target(ss: SteadyState, use_theta: bool) -> float:
    return ss.theta[1] if use_theta else ss.rho_v


def mixed_best_response(params: ModelParams, vp: VaccinationParams, x, use_theta: bool = False) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    qa = params.q_a
    ss = solve_steady_state(params.replace(x_a=float(x[0]), x_v=float(x[1])))
    return clamp01(np.array([vp.k * (qa * x[0] + (1 - qa) * x[1]) - vp.d,
                             vp.k * _mixed_target(ss, use_theta)]))


def enumerate_mixed_equilibria(params: ModelParams, vp: VaccinationParams, use_theta: bool = False,
                               n_grid: int = 400) -> List[VaccinationEquilibrium]:
    """Fixed points of the mixed model: peer pressure for anti-vaxxers, infection risk for vaxxers."""
    if not 1 > vp.k * params.q_a:
        raise ValueError("mixed model needs k * q_a < 1")

    def g(xv):
        xa = _mixed_x_a(params, vp, xv)
        ss = solve_steady_state(params.replace(x_a=xa, x_v=xv))
        return xv - min(vp.k * _mixed_target(ss, use_theta), 1.0)

    grid = np.linspace(0.0, 1.0, n_grid + 1)
    vals = np.array([g(v) for v in grid])
    roots = []
    for i in range(n_grid):
        if vals[i] == 0.0:
            roots.append(grid[i])
        elif vals[i] * vals[i + 1] < 0:
            roots.append(brentq(g, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15))
    if vals[-1] == 0.0:
        roots.append(1.0)
    out = []
    for xv in roots:
        x = np.array([_mixed_x_a(params, vp, xv), xv])
        res = float(np.max(np.abs(x - mixed_best_response(params, vp, x, use_theta))))
        ss = solve_steady_state(params.replace(x_a=float(x[0]), x_v=float(x[1])))
        eq = VaccinationEquilibrium(float(x[0]), float(x[1]), ModelKind.MIXED, classify_pair(*x), res, ss)
        try:
            der = dh_mixed(params, vp, eq, use_theta)
        except ValueError:
            der = None
        out.append(VaccinationEquilibrium(eq.x_a_star, eq.x_v_star, eq.kind, eq.classification,
                                          res, ss, der))
    return out


def solve_mixed_equilibrium(params: ModelParams, vp: VaccinationParams,
                            use_theta: bool = False) -> VaccinationEquilibrium:
    """Mixed-model equilibrium; the one with the largest ``x_v`` when several exist."""
    eqs = enumerate_mixed_equilibria(params, vp, use_theta)
    if not eqs:
        raise RuntimeError(f"no mixed equilibrium found for {params}, {vp}")
    return max(eqs, key=lambda e: e.x_v_star)


def dh_mixed(params: ModelParams, vp: VaccinationParams, eq: VaccinationEquilibrium,
             use_theta: bool = False) -> Tuple[float, float]:
    free = _free_coords(eq)
    if not free:
        return 0.0, 0.0
    ss = eq.induced
    if not ss.is_interior:
        raise ValueError("induced steady state is disease free")
    p, k = ss.params, vp.k
    qa = p.q_a
    if use_theta:
        dxf = theta_partials(ss)[1]
        dhf = dparam_steady_state(ss, "h")[1] / (1 - p.x_v)
    else:
        dxf = np.array([dparam_steady_state(ss, "x_a")[1], dparam_steady_state(ss, "x_v")[1]])
        dhf = dparam_steady_state(ss, "h")[1]
    Jx = np.array([[1 - k * qa, -k * (1 - qa)], [-k * dxf[0], 1 - k * dxf[1]]])
    Jh = np.array([k * (1 - p.q) * (p.x_v - p.x_a), -k * dhf])
    sub = Jx[np.ix_(free, free)]
    if abs(np.linalg.det(sub)) < 1e-12:
        raise ValueError("singular equilibrium Jacobian")
    out = np.zeros(2)
    out[free] = -np.linalg.solve(sub, Jh[free])
    return float(out[0]), float(out[1])


# --- welfare --------------------------------------------------------------

@dataclass(frozen=True)
class WelfareReport:
    W: float
    W_congestion: float
    W_from_costs: float
    ci_total: float
    x_star: float
    decentralized_gap: float


def welfare_closed_form(params: ModelParams, vp: VaccinationParams, rho: float) -> float:
    """Utilitarian welfare in its reduced form."""
    q = params.q
    return -0.5 * (q * (params.x_a + vp.d) ** 2 + (1 - q) * params.x_v ** 2) - rho


def welfare_from_costs(params: ModelParams, vp: VaccinationParams, rho: float) -> float:
    """Welfare summed over the cost distributions, assuming threshold vaccination.

    Anti-vaxxer costs are uniform on ``[d/k, (1+d)/k]``, vaxxer costs on
    ``[0, 1/k]``; the vaccinated pay their cost, the others their expected
    infected time.
    """
    q, k, d = params.q, vp.k, vp.d
    vax_cost = q * ((params.x_a + d) ** 2 - d ** 2) / (2 * k) + (1 - q) * params.x_v ** 2 / (2 * k)
    return -vax_cost - rho


def welfare(ss: SteadyState, vp: VaccinationParams, d_rho0=1.0) -> WelfareReport:
    p = ss.params
    W = welfare_closed_form(p, vp, ss.rho)
    ci = cumulative_infection(LinearizedSystem.at(ss), d_rho0).ci_total if ss.is_interior else 0.0
    opt = optimal_vaccination(vp.k, p.mu)
    return WelfareReport(W, W - vp.b * ci, welfare_from_costs(p, vp, ss.rho), ci,
                         opt.x_star, opt.x_star - opt.x_decentralized)


# --- planner optimum (one group) ------------------------------------------

@dataclass(frozen=True)
class OptimalVaccination:
    x_star: float
    x_decentralized: float
    grid: np.ndarray
    W: np.ndarray


def planner_welfare(x, k: float, mu: float):
    x = np.asarray(x, dtype=float)
    return -x ** 2 / (2 * k) - np.maximum(1 - x - mu, 0.0)


def decentralized_vaccination(k: float, mu: float) -> float:
    """Solves ``x = k (1 - x - mu) / (1 - x)`` on ``[0, 1 - mu]``."""
    if mu >= 1:
        return 0.0
    return brentq(lambda x: x - k * (1 - x - mu) / (1 - x), 0.0, 1 - mu, xtol=1e-15)


def optimal_vaccination(k: float, mu: float, n_grid: int = 10001) -> OptimalVaccination:
    if k <= 0 or mu <= 0:
        raise ValueError("k and mu must be positive")
    grid = np.linspace(0.0, 1.0, n_grid)
    return OptimalVaccination(min(k, 1 - mu), decentralized_vaccination(k, mu), grid,
                              planner_welfare(grid, k, mu))
