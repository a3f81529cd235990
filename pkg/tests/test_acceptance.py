"""Acceptance criteria, one test per criterion.

Each test records a ``CRITERION n: PASS|FAIL`` line; the lines are echoed in
the pytest terminal summary (see conftest.py) and printed when this file is
run as a script.
"""

import time

import numpy as np
import pytest

from homophily_sis.core import InfectionState, ModelParams
from homophily_sis.linearized import LinearizedSystem, convergence_rate, cumulative_infection
from homophily_sis.sir import dh_ci_sir, integrate_sir, solve_final_size
from homophily_sis.statics import dh_ci_total, dh_steady_state, dparam_convergence_rate
from homophily_sis.steady_state import epidemic_threshold, lemma_orderings, solve_steady_state
from homophily_sis.stochastic import stochastic_cross_check
from homophily_sis.vaccination import (VaccinationParams, endogenous_dh, enumerate_peer_equilibria,
                                       enumerate_rational_equilibria, optimal_vaccination, peer_interior_formula,
                                       solve_rational_equilibrium)

from oracles import (central_difference, discounted_quadrature_ci, fitted_decay_rate, ode_steady_state,
                     peer_brute_force, random_params, rational_br_iteration)

RESULTS = {}
NOTES = []

LO, HI = 1e-4, 1 - 1e-4


def record(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def note(text):
    NOTES.append(text)
    print(f"  info: {text}")


def _cr(p):
    return convergence_rate(LinearizedSystem.at(solve_steady_state(p)))


def _ci(p, d=1.0):
    return cumulative_infection(LinearizedSystem.at(solve_steady_state(p)), d).ci_total


def _below_vaxxer_threshold(p):
    return 1 - p.x_v


# --- 1 ---------------------------------------------------------------------

def test_criterion_1_threshold_closed_forms():
    rng = np.random.default_rng(101)
    worst, mono = 0.0, True
    for _ in range(100):
        p = random_params(rng)
        worst = max(worst, abs(epidemic_threshold(p.replace(h=0.0)) - (1 - p.x)),
                    abs(epidemic_threshold(p.replace(h=1.0)) - (1 - p.x_a)))
        grid = [epidemic_threshold(p.replace(h=h)) for h in np.linspace(0, 1, 101)]
        mono &= bool(np.all(np.diff(grid) >= -1e-14))
    ok = worst <= 1e-12 and mono
    assert record(1, ok, f"max closed-form error {worst:.1e} (tol 1e-12), nondecreasing on all grids: {mono}")


# --- 2 ---------------------------------------------------------------------

def test_criterion_2_steady_state_limits_and_orderings():
    # near-endpoint solves go through Newton, so they check the closed forms independently
    rng = np.random.default_rng(102)
    worst, order_ok, solves = 0.0, True, 0
    eps = 1e-12
    for _ in range(100):
        p = random_params(rng)
        ux = 1 - p.x
        s0 = solve_steady_state(p.replace(h=eps))
        lim0 = np.array([1 - p.x_a, 1 - p.x_v]) * max(ux - p.mu, 0.0) / ux
        s1 = solve_steady_state(p.replace(h=1 - eps))
        lim1 = np.array([1 - p.x_a - p.mu, max(1 - p.x_v - p.mu, 0.0)])
        # skip draws sitting on a threshold, where the limits are approached at rate sqrt(eps)
        if abs(p.mu - ux) > 1e-2:
            worst = max(worst, np.max(np.abs(s0.state.as_array() - lim0)))
        if abs(p.mu - (1 - p.x_v)) > 1e-2:
            worst = max(worst, np.max(np.abs(s1.state.as_array() - lim1)))
        for h in np.linspace(0, 1, 11):
            ss = solve_steady_state(p.replace(h=h))
            if ss.is_interior:
                solves += 1
                order_ok &= all(lemma_orderings(ss).values())
    ok = worst <= 1e-10 and order_ok
    assert record(2, ok, f"max limit error {worst:.1e} (tol 1e-10); orderings held at {solves} interior solves: {order_ok}")


# --- 3 ---------------------------------------------------------------------

def test_criterion_3_dynamics_oracle():
    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(200):
        p = random_params(rng, margin=0.05)
        ss = solve_steady_state(p)
        start = InfectionState(rng.uniform(0.01, 1 - p.x_a), rng.uniform(0.01, 1 - p.x_v))
        worst = max(worst, np.max(np.abs(ode_steady_state(p, start).as_array() - ss.state.as_array())))
    worst_sub = 0.0
    for _ in range(50):
        p = random_params(rng, supercritical=False, margin=0.05)
        start = InfectionState(rng.uniform(0.01, 1 - p.x_a), rng.uniform(0.01, 1 - p.x_v))
        worst_sub = max(worst_sub, np.max(np.abs(ode_steady_state(p, start).as_array())))
    ok = worst <= 1e-6 and worst_sub <= 1e-6
    assert record(3, ok, f"supercritical max distance {worst:.1e}, subcritical max prevalence {worst_sub:.1e} (tol 1e-6)")


# --- 4 ---------------------------------------------------------------------

def test_criterion_4_ci_identity():
    rng = np.random.default_rng(104)
    worst_q = 0.0
    for _ in range(50):
        p = random_params(rng)
        sys_ = LinearizedSystem.at(solve_steady_state(p))
        d = rng.uniform(-1, 1, 2)
        ref = discounted_quadrature_ci(sys_.J, d, p.r, convergence_rate(sys_))
        worst_q = max(worst_q, np.max(np.abs(cumulative_infection(sys_, d).vector - ref)))
    worst_h1 = 0.0
    for _ in range(100):
        p = random_params(rng, h=1.0, mu_cap=_below_vaxxer_threshold)
        ss = solve_steady_state(p)
        dbar = rng.uniform(0.1, 2.0)
        ci = cumulative_infection(LinearizedSystem.at(ss), dbar)
        worst_h1 = max(worst_h1, abs(ci.ci_a - p.r * dbar / (ss.rho_a + p.r)),
                       abs(ci.ci_v - p.r * dbar / (ss.rho_v + p.r)))
    ok = worst_q <= 1e-8 and worst_h1 <= 1e-10
    assert record(4, ok, f"resolvent vs quadrature {worst_q:.1e} (tol 1e-8); segregated formula {worst_h1:.1e} (tol 1e-10)")


# --- 5 and 6 ---------------------------------------------------------------

def _prop_draws(seed, n, mu_cap):
    rng = np.random.default_rng(seed)
    return [random_params(rng, margin=0.01, mu_cap=mu_cap) for _ in range(n)]


def _endpoint_signs(p):
    out = {}
    for h in (LO, HI):
        ss = solve_steady_state(p.replace(h=h))
        out[h] = (dh_steady_state(ss).dh_rho, dh_ci_total(LinearizedSystem.at(ss)).total)
    return out


def _wide_band_note(seed):
    rng = np.random.default_rng(seed)
    rho_bad = ci_bad = n = 0
    while n < 100:
        p = random_params(rng, margin=0.01)
        if not 1 - p.x_v < p.mu < 1 - p.x - 0.01:
            continue
        n += 1
        s = _endpoint_signs(p)
        rho_bad += not (s[LO][0] > 0 and s[HI][0] < 0)
        ci_bad += not (s[LO][1] < 0 and s[HI][1] > 0)
    note(f"with 1-x_v < mu < 1-x (vaxxers die out as h->1): prevalence signs fail {rho_bad}/100, "
         f"CI signs fail {ci_bad}/100")


def test_criterion_5_prevalence_signs():
    draws = _prop_draws(105, 100, _below_vaxxer_threshold)
    sign_ok, worst = 0, 0.0
    for p in draws:
        s = _endpoint_signs(p)
        sign_ok += s[LO][0] > 0 and s[HI][0] < 0
        for h in (LO, HI, 0.5):
            ph = p.replace(h=h)
            ift = dh_steady_state(solve_steady_state(ph)).dh_rho
            fd = central_difference(lambda x: solve_steady_state(p.replace(h=x)).rho, h, 1e-6)
            worst = max(worst, abs(ift - fd) / max(abs(fd), 1e-8))
    ok = sign_ok == len(draws) and worst <= 1e-4
    assert record(5, ok, f"endpoint signs held on {sign_ok}/{len(draws)} draws with mu < 1-x_v; "
                         f"IFT vs finite difference max rel error {worst:.1e} (tol 1e-4)")
    _wide_band_note(205)


def test_criterion_6_ci_signs_and_decomposition():
    draws = _prop_draws(106, 100, _below_vaxxer_threshold)
    sign_ok, worst = 0, 0.0
    for p in draws:
        s = _endpoint_signs(p)
        sign_ok += s[LO][1] < 0 and s[HI][1] > 0
        for h in (LO, HI, 0.5):
            ph = p.replace(h=h)
            eff = dh_ci_total(LinearizedSystem.at(solve_steady_state(ph)))
            fd = central_difference(lambda x: _ci(p.replace(h=x)), h, 1e-6)
            worst = max(worst, abs(eff.direct + eff.indirect - fd) / max(abs(fd), 1e-8))
    ok = sign_ok == len(draws) and worst <= 1e-4
    assert record(6, ok, f"endpoint signs held on {sign_ok}/{len(draws)} draws with mu < 1-x_v; "
                         f"direct+indirect vs end-to-end difference max rel error {worst:.1e} (tol 1e-4)")


# --- 7 ---------------------------------------------------------------------

def test_criterion_7_convergence_rate():
    rng = np.random.default_rng(107)
    worst, fitted = 0.0, 0
    while fitted < 30:
        p = random_params(rng, margin=0.05)
        sys_ = LinearizedSystem.at(solve_steady_state(p))
        if sys_.eigs[1] - sys_.eigs[0] < 0.05:
            continue
        worst = max(worst, abs(fitted_decay_rate(sys_.J, np.ones(2)) - convergence_rate(sys_)))
        fitted += 1
    fit_ok = worst <= 1e-3

    # h -> 1: central difference with step 1e-5 on the full pipeline
    pos, n_hi = 0, 30
    for p in _prop_draws(207, n_hi, _below_vaxxer_threshold):
        fd = central_difference(lambda h: _cr(p.replace(h=h)), HI, 1e-5)
        pos += fd > 0
    hi_ok = pos == n_hi

    # h -> 0: the steady-state-fixed derivative changes sign across mu = (1 - x) / 2
    bracket_ok, n_lo = 0, 30
    for p in _prop_draws(307, n_lo, None):
        mid = (1 - p.x) / 2
        below = dparam_convergence_rate(LinearizedSystem.at(solve_steady_state(p.replace(h=LO, mu=0.95 * mid))), "h")
        above = dparam_convergence_rate(LinearizedSystem.at(solve_steady_state(p.replace(h=LO, mu=1.05 * mid))), "h")
        bracket_ok += below > 0 > above
    lo_ok = bracket_ok == n_lo
    ok = fit_ok and hi_ok and lo_ok
    record(7, ok, f"decay fit max error {worst:.1e} (tol 1e-3) [{'ok' if fit_ok else 'fail'}]; "
                  f"dCR/dh > 0 at h=1-1e-4 on {pos}/{n_hi} draws [{'ok' if hi_ok else 'fail'}]; "
                  f"sign flip bracketed at mu=(1-x)/2 on {bracket_ok}/{n_lo} draws [{'ok' if lo_ok else 'fail'}]")
    assert ok


# --- 8 ---------------------------------------------------------------------

def _rational_draws(rng, n, corner=False):
    out = []
    while len(out) < n:
        p = ModelParams(q=rng.uniform(0.1, 0.9), h=rng.uniform(0, 1), mu=rng.uniform(0.05, 0.5 if corner else 0.6),
                        x_a=0.0, x_v=0.0, r=0.1)
        vp = (VaccinationParams(k=rng.uniform(0.05, 0.3), d=rng.uniform(0, 0.05)) if corner
              else VaccinationParams(k=rng.uniform(0.05, 1.0), d=rng.uniform(0, 0.2)))
        out.append((p, vp))
    return out


def test_criterion_8_rational_equilibrium():
    rng = np.random.default_rng(108)
    unique = ordered = agree = checked = 0
    worst = 0.0
    for p, vp in _rational_draws(rng, 20):
        eqs = enumerate_rational_equilibria(p, vp)
        unique += len(eqs) == 1
        if len(eqs) != 1:
            continue
        x = eqs[0].x
        ordered += x[0] <= x[1]
        dev = max(np.max(np.abs(rational_br_iteration(p, vp.k, vp.d, s) - x))
                  for s in ([0.1, 0.1], [0.9, 0.1], [0.1, 0.9], [0.9, 0.9], [0.5, 0.5]))
        worst = max(worst, dev)
        agree += dev <= 1e-8
        checked += 1
    sign_ok = sign_n = 0
    while sign_n < 50:
        p, vp = _rational_draws(rng, 1)[0]
        eq = solve_rational_equilibrium(p, vp)
        if not (eq.is_interior and eq.induced.is_interior):
            continue
        pp = eq.induced.params
        if not p.mu < (1 - pp.x) ** 2 / (1 - pp.x_a):
            continue
        sign_n += 1
        ordered_here = eq.x_a_star <= eq.x_v_star
        sign_ok += eq.derivatives[0] > 0 and eq.derivatives[1] < 0 and ordered_here
    ok = unique == 20 and agree == checked and ordered == checked and sign_ok == sign_n
    assert record(8, ok, f"unique on {unique}/20 draws, multi-start agreement max {worst:.1e} (tol 1e-8), "
                         f"x_a*<=x_v* on {ordered}/{checked}; dh x_a*>0, dh x_v*<0 on {sign_ok}/{sign_n} interior draws")


# --- 9 ---------------------------------------------------------------------

def test_criterion_9_endogenous_rational_endpoints():
    rng = np.random.default_rng(109)
    good = n = 0
    for p, vp in _rational_draws(rng, 20, corner=True):
        ok_here = True
        for h, sign in ((LO, 1), (HI, -1)):
            eq = solve_rational_equilibrium(p.replace(h=h), vp)
            eff = endogenous_dh(eq.induced, eq.derivatives)
            ok_here &= sign * eff.dh_rho > 0 and -sign * eff.dh_ci > 0
        good += ok_here
        n += 1
    assert record(9, good == n, f"dh rho and dh CI endpoint signs matched on {good}/{n} small-(k, d) draws")


# --- 10 --------------------------------------------------------------------

def test_criterion_10_peer_model():
    rng = np.random.default_rng(110)
    match = 0
    n_scan = 40
    for _ in range(n_scan):
        q, h, k, d = rng.uniform(0.1, 0.9), rng.uniform(0, 1), rng.uniform(0.3, 3), rng.uniform(0, 1)
        mine = [e.x for e in enumerate_peer_equilibria(q, h, k, d)]
        ref = peer_brute_force(q, h, k, d)
        same = len(mine) == len(ref) and all(min(np.max(np.abs(z - m)) for m in mine) < 1e-6 for z in ref)
        match += same
    worst = 0.0
    n_inner = 0
    while n_inner < 50:
        q, h, k, d = rng.uniform(0.1, 0.9), rng.uniform(0, 1), rng.uniform(1, 3), rng.uniform(0, 0.5)
        inner = peer_interior_formula(q, h, k, d)
        if inner is None or d == 0:
            continue
        n_inner += 1
        found = [e.x for e in enumerate_peer_equilibria(q, h, k, d) if e.is_interior][0]
        worst = max(worst, np.max(np.abs(found - np.array(inner))),
                    abs(inner[1] - inner[0] - d / (1 - h * k)))

    counts = {}
    for _ in range(300):
        q, k, d, mu = rng.uniform(0.1, 0.9), rng.uniform(0.3, 3), rng.uniform(0, 1), rng.uniform(0.05, 0.5)
        for e in enumerate_peer_equilibria(q, HI, k, d):
            ss = solve_steady_state(ModelParams(q=q, h=HI, mu=mu, x_a=e.x_a_star, x_v=e.x_v_star))
            c = counts.setdefault(e.classification, [0, 0, 0])
            if not ss.is_interior or e.x_a_star == e.x_v_star:
                c[2] += 1  # disease free or symmetric: derivatives vanish
                continue
            eff = endogenous_dh(ss, e.derivatives)
            c[0 if (eff.dh_ci > 0 and eff.dh_rho < 0) else 1] += 1
    held = sum(c[0] for c in counts.values())
    failed = sum(c[1] for c in counts.values())
    detail = ", ".join(f"{k} {v[0]} ok/{v[1]} fail/{v[2]} degenerate" for k, v in sorted(counts.items()))
    ok = match == n_scan and worst <= 1e-12 and failed == 0
    record(10, ok, f"enumeration matched brute force on {match}/{n_scan} draws; interior formula and gap "
                   f"identity max error {worst:.1e} (tol 1e-12); at h=1-1e-4 dh CI>0 and dh rho<0 held on "
                   f"{held}/{held + failed} equilibria ({detail})")
    assert ok


# --- 11 --------------------------------------------------------------------

def test_criterion_11_sir():
    rng = np.random.default_rng(111)
    worst = 0.0
    for _ in range(10):
        p = random_params(rng, margin=0.05)
        seed = 1e-6
        fs = solve_final_size(p, seed=seed)
        fin = integrate_sir(p, seed=seed).final
        worst = max(worst, abs(fs.R_a_ss - fin.R_a), abs(fs.R_v_ss - fin.R_v))
    gap_ok = True
    for _ in range(20):
        p = random_params(rng)
        gap_ok &= all(solve_final_size(p.replace(h=h), seed=0.0).delta_ci > 0 for h in np.linspace(0, 1, 21))
    sign_ok = sign_n = 0
    lo_pos = 0
    for _ in range(20):
        xa = rng.uniform(0.0, 0.3)
        p = ModelParams(q=rng.uniform(0.1, 0.9), h=0.0, mu=rng.uniform(1 - xa + 0.01, 1.2), x_a=xa,
                        x_v=rng.uniform(xa + 0.05, 0.9))
        for h in np.linspace(0, 1, 21):
            fs = solve_final_size(p.replace(h=h), seed=0.03)
            gap_ok &= fs.delta_ci > 0
            eff = dh_ci_sir(fs)
            sign_n += 1
            sign_ok += np.sign(eff.dh_ci) == eff.sign_certificate
        lo_pos += dh_ci_sir(solve_final_size(p.replace(h=LO), seed=0.03)).dh_ci > 0
    ok = worst <= 1e-5 and gap_ok and sign_ok == sign_n and lo_pos == 20
    assert record(11, ok, f"final size vs forward run {worst:.1e} (tol 1e-5); CI gap positive on all grids: {gap_ok}; "
                          f"sign(dh CI)=sign(R_v-R_a) at {sign_ok}/{sign_n} points with mu>1-x_a (seed 0.03); "
                          f"positive at h=1e-4 on {lo_pos}/20")


# --- 12 --------------------------------------------------------------------

def test_criterion_12_planner():
    rng = np.random.default_rng(112)
    within = below = 0
    for _ in range(200):
        k, mu = rng.uniform(0.05, 3), rng.uniform(0.01, 0.99)
        opt = optimal_vaccination(k, mu, n_grid=10001)
        step = opt.grid[1] - opt.grid[0]
        within += abs(opt.grid[np.argmax(opt.W)] - min(k, 1 - mu)) <= step
        below += opt.x_decentralized < opt.x_star
    ok = within == 200 and below == 200
    assert record(12, ok, f"grid argmax within one step of min(k, 1-mu) on {within}/200; decentralized below optimum on {below}/200")


# --- 13 --------------------------------------------------------------------

STOCHASTIC_SETS = [
    ModelParams(q=0.4, h=0.3, mu=0.3, x_a=0.1, x_v=0.4),
    ModelParams(q=0.5, h=0.0, mu=0.2, x_a=0.2, x_v=0.4),
    ModelParams(q=0.3, h=0.7, mu=0.25, x_a=0.0, x_v=0.3),
    ModelParams(q=0.6, h=0.5, mu=0.4, x_a=0.05, x_v=0.2),
    ModelParams(q=0.5, h=0.9, mu=0.3, x_a=0.1, x_v=0.5),
]


@pytest.mark.slow
def test_criterion_13_stochastic_cross_check():
    within = 0
    zs = []
    for i, p in enumerate(STOCHASTIC_SETS):
        cc = stochastic_cross_check(p, agents=100_000, horizon=200.0, seed=2000 + i, replicates=10)
        within += cc.within(3.0)
        zs.append(np.max(np.abs(cc.z_scores)))
    ok = within == len(STOCHASTIC_SETS)
    assert record(13, ok, f"{within}/{len(STOCHASTIC_SETS)} parameter sets within 3 standard errors "
                          f"(10 seeds, N=1e5); max |z| {max(zs):.2f}")


if __name__ == "__main__":
    start = time.time()
    tests = [v for k, v in sorted(globals().items(), key=lambda kv: int(kv[0].split("_")[2])
                                  if kv[0].startswith("test_criterion_") else 0) if k.startswith("test_criterion_")]
    for t in tests:
        try:
            t()
        except AssertionError:
            pass
    print(f"{sum('PASS' in v for v in RESULTS.values())}/{len(RESULTS)} criteria passed in {time.time() - start:.0f}s")
